//! `qbmvae v1` checkpoint container.
//!
//! ```text
//! qbmvae v1
//! prior boltzmann
//! beta 0.5
//! q_clamp_epsilon 1e-6
//! rng_seed 7
//! meta best_epoch 12
//! tensor encoder.hidden.w <rows> <cols>
//! <rows lines of cols numbers>
//! ...
//! bm <line count>
//! <embedded `bm v1` text>
//! end
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! value, so a save/load round trip is exact.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::nn::{DecoderParams, Dense, EncoderParams};
use super::{Prior, PriorKind, QbmVaeModel};
use crate::energy::BoltzmannMachine;
use crate::error::{Error, Result};
use crate::reparam::ReparamConfig;

const HEADER: &str = "qbmvae v1";

const TENSORS: [&str; 8] = [
    "encoder.hidden.w",
    "encoder.hidden.b",
    "encoder.head.w",
    "encoder.head.b",
    "decoder.hidden.w",
    "decoder.hidden.b",
    "decoder.out.w",
    "decoder.out.b",
];

fn push_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    out.push_str(&format!("tensor {name} {} {}\n", m.nrows(), m.ncols()));
    for row in m.row_iter() {
        out.push_str(&crate::energy::join_f64(row.iter().copied()));
        out.push('\n');
    }
}

fn push_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    out.push_str(&format!("tensor {name} 1 {}\n", v.len()));
    out.push_str(&crate::energy::join_f64(v.iter().copied()));
    out.push('\n');
}

impl QbmVaeModel {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nprior {}\n", self.prior_kind());
        out.push_str(&format!("beta {:?}\n", self.reparam.beta));
        out.push_str(&format!("q_clamp_epsilon {:?}\n", self.reparam.q_clamp_epsilon));
        out.push_str(&format!("rng_seed {}\n", self.rng_seed));
        for (k, v) in &self.metadata {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        let layers: [&Dense; 4] = [
            &self.encoder.hidden,
            &self.encoder.head,
            &self.decoder.hidden,
            &self.decoder.out,
        ];
        for (i, layer) in layers.iter().enumerate() {
            push_matrix(&mut out, TENSORS[2 * i], &layer.w);
            push_vector(&mut out, TENSORS[2 * i + 1], &layer.b);
        }
        if let Prior::Boltzmann(bm) = &self.prior {
            let text = bm.to_text();
            out.push_str(&format!("bm {}\n", text.lines().count()));
            out.push_str(&text);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0usize;
        let err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let next = |pos: &mut usize| -> Result<(usize, &str)> {
            let i = *pos;
            let l = lines.get(i).ok_or(Error::Parse {
                line: i + 1,
                msg: "unexpected end of checkpoint".into(),
            })?;
            *pos += 1;
            Ok((i, l.trim_end()))
        };
        let (i, header) = next(&mut pos)?;
        if header != HEADER {
            return Err(err(i, format!("expected `{HEADER}`, got `{header}`")));
        }

        let mut prior_kind = None;
        let mut beta = None;
        let mut eps = None;
        let mut rng_seed = None;
        let mut metadata = BTreeMap::new();
        let mut tensors: BTreeMap<String, DMatrix<f64>> = BTreeMap::new();
        let mut bm = None;
        loop {
            let (i, line) = next(&mut pos)?;
            if line == "end" {
                break;
            }
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("");
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(i, format!("bad number `{s}`: {e}")));
            match key {
                "prior" => prior_kind = Some(rest.parse::<PriorKind>().map_err(|e| err(i, e.to_string()))?),
                "beta" => beta = Some(float(rest)?),
                "q_clamp_epsilon" => eps = Some(float(rest)?),
                "rng_seed" => rng_seed = Some(rest.parse::<u64>().map_err(|e| err(i, format!("bad seed: {e}")))?),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    metadata.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 3 {
                        return Err(err(i, "expected `tensor <name> <rows> <cols>`".into()));
                    }
                    let dim = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|e| err(i, format!("bad dimension `{s}`: {e}")))
                    };
                    let (rows, cols) = (dim(f[1])?, dim(f[2])?);
                    let mut m = DMatrix::zeros(rows, cols);
                    for r in 0..rows {
                        let (j, row) = next(&mut pos)?;
                        let vals: Vec<f64> = row
                            .split_whitespace()
                            .map(|t| t.parse::<f64>().map_err(|e| err(j, format!("bad number `{t}`: {e}"))))
                            .collect::<Result<_>>()?;
                        if vals.len() != cols {
                            return Err(err(j, format!("expected {cols} values, found {}", vals.len())));
                        }
                        for (c, v) in vals.into_iter().enumerate() {
                            m[(r, c)] = v;
                        }
                    }
                    tensors.insert(f[0].to_string(), m);
                }
                "bm" => {
                    let count = rest
                        .parse::<usize>()
                        .map_err(|e| err(i, format!("bad line count: {e}")))?;
                    let mut block = String::new();
                    for _ in 0..count {
                        block.push_str(next(&mut pos)?.1);
                        block.push('\n');
                    }
                    bm = Some(BoltzmannMachine::from_text(&block)?);
                }
                other => return Err(err(i, format!("unknown entry `{other}`"))),
            }
        }

        let missing = |what: &str| Error::Parse {
            line: 1,
            msg: format!("checkpoint lacks `{what}`"),
        };
        let take = |tensors: &mut BTreeMap<String, DMatrix<f64>>, name: &str| {
            tensors.remove(name).ok_or_else(|| missing(name))
        };
        let mut layer = |w: &str, b: &str| -> Result<Dense> {
            let w = take(&mut tensors, w)?;
            let b = take(&mut tensors, b)?;
            if b.nrows() != 1 || b.ncols() != w.nrows() {
                return Err(Error::Dimension {
                    expected: w.nrows(),
                    got: b.ncols(),
                    context: "bias length",
                });
            }
            Ok(Dense {
                w,
                b: DVector::from_iterator(b.ncols(), b.iter().copied()),
            })
        };
        let encoder = EncoderParams {
            hidden: layer(TENSORS[0], TENSORS[1])?,
            head: layer(TENSORS[2], TENSORS[3])?,
        };
        let decoder = DecoderParams {
            hidden: layer(TENSORS[4], TENSORS[5])?,
            out: layer(TENSORS[6], TENSORS[7])?,
        };
        let prior = match prior_kind.ok_or_else(|| missing("prior"))? {
            PriorKind::Boltzmann => Prior::Boltzmann(bm.ok_or_else(|| missing("bm"))?),
            PriorKind::Gaussian => Prior::Gaussian,
        };
        let model = Self {
            encoder,
            decoder,
            prior,
            reparam: ReparamConfig::new(
                beta.ok_or_else(|| missing("beta"))?,
                eps.ok_or_else(|| missing("q_clamp_epsilon"))?,
            )?,
            rng_seed: rng_seed.ok_or_else(|| missing("rng_seed"))?,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
