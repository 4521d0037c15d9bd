use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::scmetrics::LabelVector;

/// Which preprocessing steps have been applied. Steps only ever switch on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PreprocessState {
    pub filtered: bool,
    pub normalized: bool,
    pub logged: bool,
    pub hvg_selected: bool,
}

/// Cells × genes expression matrix with per-cell labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionDataset {
    matrix: DMatrix<f64>,
    cell_ids: Vec<String>,
    genes: Vec<String>,
    batch: LabelVector,
    celltype: Option<LabelVector>,
    state: PreprocessState,
    /// Original gene indices kept by highly-variable-gene selection.
    selected_genes: Option<Vec<usize>>,
}

impl ExpressionDataset {
    pub fn new(
        matrix: DMatrix<f64>,
        cell_ids: Vec<String>,
        genes: Vec<String>,
        batch: LabelVector,
        celltype: Option<LabelVector>,
    ) -> Result<Self> {
        let ds = Self {
            matrix,
            cell_ids,
            genes,
            batch,
            celltype,
            state: PreprocessState::default(),
            selected_genes: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub(crate) fn with_state(mut self, state: PreprocessState, selected: Option<Vec<usize>>) -> Self {
        self.state = state;
        self.selected_genes = selected;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.matrix.nrows();
        if n == 0 || self.matrix.ncols() == 0 {
            return Err(Error::Empty("expression matrix"));
        }
        check_dim(n, self.cell_ids.len(), "cell id count")?;
        check_dim(self.matrix.ncols(), self.genes.len(), "gene name count")?;
        check_dim(n, self.batch.len(), "batch label count")?;
        if let Some(ct) = &self.celltype {
            check_dim(n, ct.len(), "cell type label count")?;
        }
        if self.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("expression matrix"));
        }
        if self.matrix.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("expression values must be non-negative".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn batch(&self) -> &LabelVector {
        &self.batch
    }

    pub fn celltype(&self) -> Option<&LabelVector> {
        self.celltype.as_ref()
    }

    pub fn state(&self) -> PreprocessState {
        self.state
    }

    pub fn selected_genes(&self) -> Option<&[usize]> {
        self.selected_genes.as_deref()
    }

    pub fn n_cells(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.matrix.ncols()
    }

    /// Cells at `idx`, in that order. Label vocabularies are kept whole.
    pub fn subset_cells(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Empty("cell subset"));
        }
        let matrix = DMatrix::from_fn(idx.len(), self.n_genes(), |i, j| self.matrix[(idx[i], j)]);
        Ok(Self {
            matrix,
            cell_ids: idx.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            genes: self.genes.clone(),
            batch: self.batch.select(idx)?,
            celltype: self.celltype.as_ref().map(|c| c.select(idx)).transpose()?,
            state: self.state,
            selected_genes: self.selected_genes.clone(),
        })
    }

    /// Genes at `idx`, in that order.
    pub(crate) fn subset_genes(&self, idx: &[usize]) -> Self {
        let matrix = DMatrix::from_fn(self.n_cells(), idx.len(), |i, j| self.matrix[(i, idx[j])]);
        Self {
            matrix,
            cell_ids: self.cell_ids.clone(),
            genes: idx.iter().map(|&j| self.genes[j].clone()).collect(),
            batch: self.batch.clone(),
            celltype: self.celltype.clone(),
            state: self.state,
            selected_genes: self.selected_genes.clone(),
        }
    }

    /// Genes with the given names, in that order. Used to apply a stored
    /// gene selection to a new dataset.
    pub fn select_genes<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("gene selection"));
        }
        let index: HashMap<&str, usize> = self.genes.iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect();
        let idx = names
            .iter()
            .map(|n| {
                index
                    .get(n.as_ref())
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("gene `{}` not in dataset", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.subset_genes(&idx))
    }

    /// Marks values as already library-size normalized and log-transformed,
    /// for inputs preprocessed elsewhere.
    pub fn assume_log_normalized(&self) -> Self {
        let mut state = self.state;
        state.normalized = true;
        state.logged = true;
        Self { state, ..self.clone() }
    }

    pub(crate) fn with_matrix(&self, matrix: DMatrix<f64>) -> Self {
        Self { matrix, ..self.clone() }
    }

    /// Writes `cell_id,<genes>,batch[,celltype]` CSV. Values use the
    /// shortest decimal form that reads back to the same number.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["cell_id".to_string()];
        header.extend(self.genes.iter().cloned());
        header.push("batch".into());
        if self.celltype.is_some() {
            header.push("celltype".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n_cells() {
            let mut rec = vec![self.cell_ids[i].clone()];
            rec.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            rec.push(self.batch.name(i).to_string());
            if let Some(ct) = &self.celltype {
                rec.push(ct.name(i).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = r.records();
        let header = records.next().ok_or(Error::Empty("csv input"))??;
        let cols: Vec<&str> = header.iter().collect();
        let has_type = cols.last() == Some(&"celltype");
        let label_cols = 1 + usize::from(has_type);
        if cols.len() < 2 + label_cols || cols[0] != "cell_id" || cols[cols.len() - label_cols] != "batch" {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `cell_id,<genes...>,batch[,celltype]`".into(),
            });
        }
        let genes: Vec<String> = cols[1..cols.len() - label_cols].iter().map(|s| s.to_string()).collect();
        let g = genes.len();
        let mut values = Vec::new();
        let mut ids = Vec::new();
        let mut batch = Vec::new();
        let mut types = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != cols.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", cols.len(), rec.len()),
                });
            }
            ids.push(rec[0].to_string());
            for j in 0..g {
                let tok = &rec[1 + j];
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad value `{tok}` for gene `{}`", genes[j]),
                })?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("value `{tok}` is negative or not finite"),
                    });
                }
                values.push(v);
            }
            batch.push(rec[1 + g].to_string());
            if has_type {
                types.push(rec[2 + g].to_string());
            }
        }
        if ids.is_empty() {
            return Err(Error::Empty("csv body"));
        }
        let matrix = DMatrix::from_row_slice(ids.len(), g, &values);
        let celltype = if has_type {
            Some(LabelVector::from_names(&types)?)
        } else {
            None
        };
        Self::new(matrix, ids, genes, LabelVector::from_names(&batch)?, celltype)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }

    /// Reads a coordinate-format matrix (rows are cells, columns genes), a
    /// gene-name file with one name per line, and a label CSV with header
    /// `cell_id,batch[,celltype]` listing cells in row order.
    pub fn load_mtx(paths: &MtxPaths) -> Result<Self> {
        let matrix = read_mtx(BufReader::new(File::open(&paths.matrix)?))?;
        let genes: Vec<String> = std::fs::read_to_string(&paths.genes)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(&paths.labels)?;
        let headers = r.headers()?.clone();
        let has_type = headers.len() == 3 && &headers[2] == "celltype";
        if headers.len() < 2 || &headers[0] != "cell_id" || &headers[1] != "batch" || (headers.len() == 3 && !has_type)
        {
            return Err(Error::Parse {
                line: 1,
                msg: "label header must be `cell_id,batch[,celltype]`".into(),
            });
        }
        let (mut ids, mut batch, mut types) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            batch.push(rec[1].to_string());
            if has_type {
                types.push(rec[2].to_string());
            }
        }
        if batch.is_empty() {
            return Err(Error::Empty("label file"));
        }
        let celltype = if has_type {
            Some(LabelVector::from_names(&types)?)
        } else {
            None
        };
        Self::new(matrix, ids, genes, LabelVector::from_names(&batch)?, celltype)
    }

    /// Writes the three files read by [`load_mtx`](Self::load_mtx), storing
    /// only nonzero entries.
    pub fn save_mtx(&self, paths: &MtxPaths) -> Result<()> {
        let mut m = File::create(&paths.matrix)?;
        let nnz = self.matrix.iter().filter(|&&v| v != 0.0).count();
        writeln!(m, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(m, "{} {} {}", self.n_cells(), self.n_genes(), nnz)?;
        for i in 0..self.n_cells() {
            for j in 0..self.n_genes() {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    writeln!(m, "{} {} {}", i + 1, j + 1, v)?;
                }
            }
        }
        std::fs::write(&paths.genes, self.genes.join("\n") + "\n")?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&paths.labels)?;
        if self.celltype.is_some() {
            w.write_record(["cell_id", "batch", "celltype"])?;
        } else {
            w.write_record(["cell_id", "batch"])?;
        }
        for i in 0..self.n_cells() {
            let mut rec = vec![self.cell_ids[i].as_str(), self.batch.name(i)];
            if let Some(ct) = &self.celltype {
                rec.push(ct.name(i));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MtxPaths {
    pub matrix: PathBuf,
    pub genes: PathBuf,
    pub labels: PathBuf,
}

impl MtxPaths {
    /// `<dir>/matrix.mtx`, `<dir>/genes.txt`, `<dir>/labels.csv`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            matrix: dir.join("matrix.mtx"),
            genes: dir.join("genes.txt"),
            labels: dir.join("labels.csv"),
        }
    }
}

/// Parses a real or integer general coordinate Matrix Market body.
/// Explicit zeros are allowed; repeated coordinates are an error.
pub fn read_mtx<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut lines = input.lines().enumerate();
    let (_, banner) = lines.next().ok_or(Error::Empty("mtx input"))?;
    let banner = banner?;
    let words: Vec<String> = banner.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    let ok = words.len() == 5
        && words[0] == "%%matrixmarket"
        && words[1] == "matrix"
        && words[2] == "coordinate"
        && (words[3] == "real" || words[3] == "integer")
        && words[4] == "general";
    if !ok {
        return Err(Error::Parse {
            line: 1,
            msg: "expected `%%MatrixMarket matrix coordinate real general`".into(),
        });
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut matrix = DMatrix::zeros(0, 0);
    let mut seen = HashMap::new();
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(err("expected `rows cols entries`".into()));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad size `{s}`")));
                let dims = (p(f[0])?, p(f[1])?, p(f[2])?);
                matrix = DMatrix::zeros(dims.0, dims.1);
                size = Some(dims);
            }
            Some((rows, cols, _)) => {
                if f.len() != 3 {
                    return Err(err("expected `row col value`".into()));
                }
                let r: usize = f[0].parse().map_err(|_| err(format!("bad row `{}`", f[0])))?;
                let c: usize = f[1].parse().map_err(|_| err(format!("bad column `{}`", f[1])))?;
                let v: f64 = f[2].parse().map_err(|_| err(format!("bad value `{}`", f[2])))?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(err(format!("coordinate ({r}, {c}) outside {rows} × {cols}")));
                }
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(err(format!("value `{}` is negative or not finite", f[2])));
                }
                if seen.insert((r, c), ()).is_some() {
                    return Err(err(format!("repeated coordinate ({r}, {c})")));
                }
                matrix[(r - 1, c - 1)] = v;
            }
        }
    }
    let (_, _, nnz) = size.ok_or(Error::Empty("mtx size line"))?;
    if seen.len() != nnz {
        return Err(Error::Parse {
            line: 2,
            msg: format!("declared {nnz} entries, found {}", seen.len()),
        });
    }
    Ok(matrix)
}
