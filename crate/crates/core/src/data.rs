//! Datasets, centering, standardization and CSV ingestion.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{CssError, Result};

/// An `n × p` predictor matrix with an `n`-vector response.
///
/// The centering and scaling applied since construction are recorded so that
/// directions estimated in working coordinates can be mapped back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    response_name: String,
    centered: bool,
    standardized: bool,
    /// Column means removed by `center` (zeros when uncentered).
    x_shift: DVector<f64>,
    y_shift: f64,
    /// Column standard deviations divided out by `standardize` (ones otherwise).
    x_scale: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, names, "y".to_string())
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(CssError::Dimension(format!(
                "predictor matrix has {n} rows but response has {}",
                y.len()
            )));
        }
        if n < 2 {
            return Err(CssError::TooFewRows {
                needed: 2,
                found: n,
            });
        }
        if p == 0 {
            return Err(CssError::Dimension("no predictor columns".into()));
        }
        if names.len() != p {
            return Err(CssError::Dimension(format!(
                "{} names for {p} predictors",
                names.len()
            )));
        }
        for i in 0..n {
            for j in 0..p {
                if !x[(i, j)].is_finite() {
                    return Err(CssError::NonFinite { row: i, column: j });
                }
            }
            if !y[i].is_finite() {
                return Err(CssError::NonFinite { row: i, column: p });
            }
        }
        Ok(Self {
            x,
            y,
            names,
            response_name,
            centered: false,
            standardized: false,
            x_shift: DVector::zeros(p),
            y_shift: 0.0,
            x_scale: DVector::from_element(p, 1.0),
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Per-column scale divided out by [`Dataset::standardize`].
    pub fn scales(&self) -> &DVector<f64> {
        &self.x_scale
    }

    /// Column means of the raw predictors that centering removed.
    pub fn shifts(&self) -> &DVector<f64> {
        &self.x_shift
    }

    pub fn column_means(&self) -> DVector<f64> {
        self.x.row_mean().transpose()
    }

    /// Subtract column means from X and the mean from Y.
    pub fn center(&self) -> Dataset {
        let means = self.column_means();
        let y_mean = self.y.mean();
        let mut out = self.clone();
        for (j, mut col) in out.x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        out.y.add_scalar_mut(-y_mean);
        // a second pass removes the rounding residue of the first
        let resid = out.column_means();
        for (j, mut col) in out.x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-resid[j]);
        }
        let y_resid = out.y.mean();
        out.y.add_scalar_mut(-y_resid);
        out.x_shift += means.component_mul(&self.x_scale) + resid.component_mul(&self.x_scale);
        out.y_shift += y_mean + y_resid;
        out.centered = true;
        out
    }

    /// Center, then divide every predictor column by its standard deviation
    /// (divisor `n`). The response is centered but not scaled.
    pub fn standardize(&self) -> Result<Dataset> {
        let mut out = self.center();
        let n = out.n() as f64;
        for j in 0..out.p() {
            let var = out.x.column(j).norm_squared() / n;
            if !(var > 0.0) {
                return Err(CssError::ZeroVariance { column: j });
            }
            let sd = var.sqrt();
            out.x.column_mut(j).scale_mut(1.0 / sd);
            out.x_scale[j] *= sd;
        }
        out.standardized = true;
        Ok(out)
    }

    /// Map directions estimated in this dataset's working coordinates back to
    /// the original predictor coordinates: `β_orig = D^{-1/2} β`.
    pub fn back_map(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = beta.clone();
        for i in 0..out.nrows() {
            let s = self.x_scale[i];
            out.row_mut(i).scale_mut(1.0 / s);
        }
        out
    }

    /// Rows selected by `idx`, in that order. Transformation state is reset:
    /// the result holds the current working values as raw data.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Dataset::with_names(x, y, self.names.clone(), self.response_name.clone())
    }

    /// Drop the response-scale information and replace Y.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(CssError::Dimension("response length".into()));
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }
}

/// Sample covariance of the predictors with divisor `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub sigma: DMatrix<f64>,
    /// Whether `sigma` admits a Cholesky factorization.
    pub chol_ok: bool,
}

pub fn covariance(ds: &Dataset) -> CovMatrix {
    let n = ds.n() as f64;
    let means = ds.column_means();
    let mut xc = ds.x().clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let sigma = crate::linalg::symmetrize(&(xc.transpose() * &xc / n));
    let chol_ok = {
        let min_diag = sigma
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(*v));
        min_diag > 0.0 && sigma.clone().cholesky().is_some()
    };
    CovMatrix { sigma, chol_ok }
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for ResponseColumn {
    fn from(s: &str) -> Self {
        ResponseColumn::Name(s.to_string())
    }
}

/// Load a comma-separated file with a header row. Every column other than the
/// response becomes a predictor. Row numbers in errors are file line numbers.
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CssError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CssError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let resp_idx = match response {
        ResponseColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CssError::MissingResponse(name.clone()))?,
        ResponseColumn::Index(i) if *i < headers.len() => *i,
        ResponseColumn::Index(i) => return Err(CssError::MissingResponse(format!("#{i}"))),
    };
    let p = headers.len() - 1;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| CssError::Csv {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(CssError::Csv {
                row: line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| CssError::NonNumeric {
                row: line,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CssError::NonNumeric {
                    row: line,
                    column: headers[c].clone(),
                    value: cell.to_string(),
                });
            }
            if c == resp_idx {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
    }
    let n = ys.len();
    if n < 2 {
        return Err(CssError::TooFewRows {
            needed: 2,
            found: n,
        });
    }
    let x = DMatrix::from_row_slice(n, p, &xs);
    let y = DVector::from_vec(ys);
    let names = headers
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != resp_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::with_names(x, y, names, headers[resp_idx].clone())
}

/// Write predictors and response as CSV with 17 significant digits.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| CssError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    let mut header: Vec<&str> = ds.names().iter().map(String::as_str).collect();
    header.push(ds.response_name());
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.n() {
        let mut fields: Vec<String> = (0..ds.p()).map(|j| fmt17(ds.x()[(i, j)])).collect();
        fields.push(fmt17(ds.y()[i]));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Format with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
