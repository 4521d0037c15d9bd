//! Message layer of the `qsrv/1` protocol. See `PROTOCOL.md` for the
//! normative description; this module is its only implementation.

use std::fmt::Display;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DVector;
use qbmvae::energy::{binary_to_spins, bm_to_spin_model, from_upper_triangle, BoltzmannMachine};
use qbmvae::model::{LocalSampler, NegativeSampler, SamplerChoice};
use qbmvae::samplers::{AnnealSchedule, GibbsConfig, SampleMeta, SampleSet, ScheduleShape, VariableKind};

use crate::error::{ClientError, ErrorCode};

pub const VERSION: &str = "qsrv/1";
/// Largest payload either side accepts unless configured otherwise.
pub const DEFAULT_MAX_FRAME: usize = 64 << 20;

/// An ordered flat key-value document. Keys are unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    fields: Vec<(String, String)>,
}

impl Message {
    /// Starts a message of the given type with the version line.
    pub fn new(kind: &str) -> Self {
        Self {
            fields: vec![("type".into(), kind.into()), ("version".into(), VERSION.into())],
        }
    }

    pub fn push(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn kind(&self) -> &str {
        self.get("type").unwrap_or("")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ClientError> {
        self.get(key)
            .ok_or_else(|| ClientError::Malformed(format!("missing field `{key}`")))
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Result<T, ClientError> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| ClientError::Malformed(format!("field `{key}` has invalid value `{}`", truncate(raw))))
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.fields {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// Parses a payload and checks the type and version lines.
    pub fn decode(payload: &str) -> Result<Self, ClientError> {
        let mut fields: Vec<(String, String)> = Vec::new();
        for (i, line) in payload.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ClientError::Malformed(format!("line {} has no `=`", i + 1)))?;
            if k.is_empty() {
                return Err(ClientError::Malformed(format!("line {} has an empty key", i + 1)));
            }
            if fields.iter().any(|(x, _)| x == k) {
                return Err(ClientError::Malformed(format!("duplicate field `{k}`")));
            }
            fields.push((k.to_string(), v.to_string()));
        }
        let msg = Self { fields };
        msg.require("type")?;
        let version = msg.require("version")?;
        if version != VERSION {
            return Err(ClientError::Version(version.to_string()));
        }
        Ok(msg)
    }
}

fn truncate(s: &str) -> String {
    if s.len() <= 40 {
        s.to_string()
    } else {
        let cut = (0..=40).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
        format!("{}...", &s[..cut])
    }
}

/// Writes one frame: 4-byte big-endian length, then the payload.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame larger than 4 GiB"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame, rejecting lengths above `max_frame` before allocating.
pub fn read_frame<R: Read>(r: &mut R, max_frame: usize) -> Result<Vec<u8>, ClientError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(ClientError::from_io)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > max_frame {
        return Err(ClientError::FrameTooLarge { len, max: max_frame });
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(ClientError::from_io)?;
    Ok(buf)
}

pub(crate) fn join<T: Display>(values: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&v.to_string());
    }
    s
}

fn parse_reals(msg: &Message, key: &str, expected: usize) -> Result<Vec<f64>, ClientError> {
    let raw = msg.require(key)?;
    let values: Vec<f64> = if raw.is_empty() {
        Vec::new()
    } else {
        raw.split(',')
            .map(|t| {
                t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    ClientError::Malformed(format!("field `{key}` has invalid number `{}`", truncate(t)))
                })
            })
            .collect::<Result<_, _>>()?
    };
    if values.len() != expected {
        return Err(ClientError::Malformed(format!(
            "field `{key}` has {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

/// How the service should draw samples.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerSpec {
    /// `n_samples` inside the config is ignored; the job's count is used.
    Gibbs(GibbsConfig),
    Sa(AnnealSchedule),
    Exact,
}

impl SamplerSpec {
    fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Gibbs(_) => "gibbs",
            SamplerSpec::Sa(_) => "sa",
            SamplerSpec::Exact => "exact",
        }
    }
}

/// One sampling request.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleJob {
    pub job_id: u64,
    pub bm: BoltzmannMachine,
    pub kind: VariableKind,
    pub n_samples: usize,
    pub sampler: SamplerSpec,
    pub seed: u64,
}

impl SampleJob {
    pub fn to_message(&self) -> Message {
        let mut m = Message::new("sample");
        m.push("job_id", self.job_id)
            .push("sampler", self.sampler.name())
            .push("n", self.bm.n())
            .push("upper", join(&self.bm.upper_triangle()))
            .push("bias", join(self.bm.biases().as_slice()))
            .push("kind", self.kind)
            .push("n_samples", self.n_samples)
            .push("seed", self.seed);
        match &self.sampler {
            SamplerSpec::Gibbs(g) => {
                m.push("temperature", g.temperature)
                    .push("sweeps", g.n_sweeps)
                    .push("burn_in", g.burn_in)
                    .push("n_chains", g.n_chains);
            }
            SamplerSpec::Sa(s) => {
                m.push("t_start", s.t_start)
                    .push("t_end", s.t_end)
                    .push("steps", s.n_steps)
                    .push("shape", s.shape);
            }
            SamplerSpec::Exact => {}
        }
        m
    }

    /// Decodes a `sample` message. Problems larger than `max_problem_size`
    /// are rejected before the coupling list is parsed.
    pub fn from_message(m: &Message, max_problem_size: usize) -> Result<Self, ClientError> {
        if m.kind() != "sample" {
            return Err(ClientError::Malformed(format!(
                "expected a sample message, got `{}`",
                m.kind()
            )));
        }
        let job_id: u64 = m.parse_field("job_id")?;
        let n: usize = m.parse_field("n")?;
        if n == 0 {
            return Err(ClientError::Malformed("n must be positive".into()));
        }
        if n > max_problem_size {
            return Err(ClientError::Remote {
                code: ErrorCode::Capacity,
                message: format!("problem size {n} exceeds the limit of {max_problem_size}"),
            });
        }
        let upper = parse_reals(m, "upper", n * (n - 1) / 2)?;
        let bias = parse_reals(m, "bias", n)?;
        let w = from_upper_triangle(n, &upper).map_err(ClientError::Core)?;
        let bm = BoltzmannMachine::new(n, 0, w, DVector::from_vec(bias)).map_err(ClientError::Core)?;
        let kind: VariableKind = m.parse_field("kind")?;
        let n_samples: usize = m.parse_field("n_samples")?;
        if n_samples == 0 {
            return Err(ClientError::Malformed("n_samples must be positive".into()));
        }
        let seed: u64 = m.parse_field("seed")?;
        let sampler = match m.require("sampler")? {
            "gibbs" => SamplerSpec::Gibbs(GibbsConfig {
                n_samples,
                n_sweeps: m.parse_field("sweeps")?,
                burn_in: m.parse_field("burn_in")?,
                temperature: m.parse_field("temperature")?,
                n_chains: m.parse_field("n_chains")?,
            }),
            "sa" => SamplerSpec::Sa(AnnealSchedule {
                t_start: m.parse_field("t_start")?,
                t_end: m.parse_field("t_end")?,
                n_steps: m.parse_field("steps")?,
                shape: m.parse_field::<ScheduleShape>("shape")?,
            }),
            "exact" => SamplerSpec::Exact,
            other => return Err(ClientError::Malformed(format!("unknown sampler `{}`", truncate(other)))),
        };
        Ok(Self {
            job_id,
            bm,
            kind,
            n_samples,
            sampler,
            seed,
        })
    }

    /// Runs the job in-process. This is exactly what the service does, so a
    /// local call and a remote call return identical sample sets.
    pub fn execute(&self) -> qbmvae::Result<SampleSet> {
        let binary = match &self.sampler {
            SamplerSpec::Gibbs(g) => {
                let mut s = LocalSampler::new(SamplerChoice::Gibbs)?;
                s.gibbs = g.clone();
                s.sample(&self.bm, self.n_samples, self.seed)?
            }
            SamplerSpec::Sa(schedule) => {
                let mut s = LocalSampler::new(SamplerChoice::Sa)?;
                s.schedule = Some(schedule.clone());
                s.sample(&self.bm, self.n_samples, self.seed)?
            }
            SamplerSpec::Exact => {
                LocalSampler::new(SamplerChoice::Exact)?.sample(&self.bm, self.n_samples, self.seed)?
            }
        };
        match self.kind {
            VariableKind::Binary => Ok(binary),
            VariableKind::Spin => {
                let (problem, _) = bm_to_spin_model(&self.bm);
                let mut samples = Vec::with_capacity(binary.raw().len());
                let mut energies = Vec::with_capacity(binary.len());
                for row in binary.rows() {
                    let sigma = binary_to_spins(row);
                    energies.push(problem.energy(&sigma)?);
                    samples.extend(sigma);
                }
                SampleSet::new(binary.n(), samples, energies, VariableKind::Spin, binary.meta().clone())
            }
        }
    }
}

/// A decoded `result` message.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub job_id: u64,
    pub samples: SampleSet,
    /// Server-side wall time; the only field that varies between reruns.
    pub elapsed_ms: f64,
}

fn encode_rows(s: &SampleSet) -> String {
    let mut out = String::with_capacity(s.raw().len() + s.len());
    for (i, row) in s.rows().enumerate() {
        if i > 0 {
            out.push(',');
        }
        for &v in row {
            out.push(match v {
                0 => '0',
                1 if s.kind() == VariableKind::Binary => '1',
                1 => '+',
                _ => '-',
            });
        }
    }
    out
}

fn decode_rows(raw: &str, n: usize, count: usize, kind: VariableKind) -> Result<Vec<i8>, ClientError> {
    let rows: Vec<&str> = if raw.is_empty() {
        Vec::new()
    } else {
        raw.split(',').collect()
    };
    if rows.len() != count {
        return Err(ClientError::Malformed(format!(
            "expected {count} sample rows, got {}",
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(n * count);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ClientError::Malformed(format!(
                "sample row {i} has width {}, expected {n}",
                row.len()
            )));
        }
        for c in row.bytes() {
            out.push(match (kind, c) {
                (VariableKind::Binary, b'0') => 0,
                (VariableKind::Binary, b'1') => 1,
                (VariableKind::Spin, b'+') => 1,
                (VariableKind::Spin, b'-') => -1,
                _ => {
                    return Err(ClientError::Malformed(format!(
                        "bad symbol `{}` in sample row {i}",
                        c as char
                    )))
                }
            });
        }
    }
    Ok(out)
}

impl SampleResult {
    pub fn to_message(&self) -> Message {
        let s = &self.samples;
        let meta = s.meta();
        let mut m = Message::new("result");
        m.push("job_id", self.job_id)
            .push("n", s.n())
            .push("kind", s.kind())
            .push("n_samples", s.len())
            .push("sampler_id", &meta.sampler_id)
            .push("seed", meta.seed)
            .push("sweeps", meta.sweeps_per_sample)
            .push("burn_in", meta.burn_in)
            .push("temperature", meta.temperature)
            .push("samples", encode_rows(s))
            .push("energies", join(s.energies()))
            .push("elapsed_ms", format!("{:.3}", self.elapsed_ms));
        m
    }

    pub fn from_message(m: &Message) -> Result<Self, ClientError> {
        if m.kind() != "result" {
            return Err(ClientError::Malformed(format!(
                "expected a result message, got `{}`",
                m.kind()
            )));
        }
        let n: usize = m.parse_field("n")?;
        let count: usize = m.parse_field("n_samples")?;
        let kind: VariableKind = m.parse_field("kind")?;
        let samples = decode_rows(m.require("samples")?, n, count, kind)?;
        let energies = parse_reals(m, "energies", count)?;
        let meta = SampleMeta {
            seed: m.parse_field("seed")?,
            sampler_id: m.require("sampler_id")?.to_string(),
            sweeps_per_sample: m.parse_field("sweeps")?,
            burn_in: m.parse_field("burn_in")?,
            temperature: m.parse_field("temperature")?,
        };
        Ok(Self {
            job_id: m.parse_field("job_id")?,
            samples: SampleSet::new(n, samples, energies, kind, meta).map_err(ClientError::Core)?,
            elapsed_ms: m.parse_field("elapsed_ms")?,
        })
    }
}

/// Answer to a `hello` request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerInfo {
    pub version: String,
    pub max_problem_size: usize,
    pub workers: usize,
}

impl ServerInfo {
    pub fn to_message(&self) -> Message {
        let mut m = Message::new("hello");
        m.push("max_problem_size", self.max_problem_size)
            .push("workers", self.workers);
        m
    }

    pub fn from_message(m: &Message) -> Result<Self, ClientError> {
        if m.kind() != "hello" {
            return Err(ClientError::Malformed(format!(
                "expected a hello message, got `{}`",
                m.kind()
            )));
        }
        Ok(Self {
            version: m.require("version")?.to_string(),
            max_problem_size: m.parse_field("max_problem_size")?,
            workers: m.parse_field("workers")?,
        })
    }
}

/// Builds an `error` message. `job_id` is echoed when the request had one.
pub fn error_message(code: ErrorCode, job_id: Option<u64>, message: &str) -> Message {
    let mut m = Message::new("error");
    if let Some(id) = job_id {
        m.push("job_id", id);
    }
    m.push("code", code).push("message", message.replace('\n', " "));
    m
}
