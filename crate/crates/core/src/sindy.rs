//! Sparse regression of the glucose difference onto a library of
//! candidate terms, solved by sequentially thresholded ridge regression.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Segment, HALF_WINDOW, HORIZON};
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, VarRef};
use crate::fde::{FdeModel, ModelKind, ModelMetadata};
use crate::variable::VariableId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyLibrarySpec {
    pub include_constant: bool,
    pub include_linear: bool,
    pub include_quadratic: bool,
    /// Extra columns `v(t_n - lag)`.
    pub lag_features: Vec<(VariableId, u8)>,
    /// First and second backward differences of glucose.
    pub derivative_features: bool,
}

impl Default for SindyLibrarySpec {
    fn default() -> Self {
        SindyLibrarySpec {
            include_constant: true,
            include_linear: true,
            include_quadratic: true,
            lag_features: Vec::new(),
            derivative_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyConfig {
    pub library: SindyLibrarySpec,
    /// Threshold, and ridge weight unless `ridge` is set.
    pub lambda: f64,
    pub ridge: Option<f64>,
    pub max_iters: usize,
    /// Centre columns and scale them to unit variance before regression;
    /// without a constant column they are only scaled.
    pub standardize: bool,
}

impl Default for SindyConfig {
    fn default() -> Self {
        SindyConfig {
            library: SindyLibrarySpec::default(),
            lambda: 0.5,
            ridge: None,
            max_iters: 20,
            standardize: true,
        }
    }
}

/// Named library column, kept as an expression so it can be placed in the
/// fitted model directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub expr: Expr,
}

impl Column {
    fn new(expr: Expr) -> Self {
        Column {
            name: expr.to_string(),
            expr,
        }
    }
}

pub fn library_columns(spec: &SindyLibrarySpec) -> Result<Vec<Column>> {
    use VariableId::G;
    let mut cols = Vec::new();
    if spec.include_constant {
        cols.push(Column::new(Expr::Const(1.0)));
    }
    if spec.include_linear {
        cols.extend(VariableId::ALL.iter().map(|&v| Column::new(Expr::var(v))));
    }
    if spec.include_quadratic {
        for (i, &a) in VariableId::ALL.iter().enumerate() {
            for &b in &VariableId::ALL[i + 1..] {
                cols.push(Column::new(Expr::product(a, b)));
            }
        }
        cols.extend(VariableId::ALL.iter().map(|&v| Column::new(Expr::product(v, v))));
    }
    for &(v, lag) in &spec.lag_features {
        if lag == 0 || lag as usize > HALF_WINDOW {
            return Err(Error::Config(format!("lag for {v} must be in 1..={HALF_WINDOW}")));
        }
        cols.push(Column::new(Expr::lagged(v, lag)));
    }
    if spec.derivative_features {
        let d1 = Expr::sub(Expr::var(G), Expr::lagged(G, 1));
        let d2 = Expr::add(
            Expr::sub(Expr::var(G), Expr::mul(Expr::Const(2.0), Expr::lagged(G, 1))),
            Expr::lagged(G, 2),
        );
        cols.push(Column::new(d1));
        cols.push(Column::new(d2));
    }
    let mut names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate library columns".into()));
    }
    if cols.is_empty() {
        return Err(Error::Config("empty SINDy library".into()));
    }
    Ok(cols)
}

/// Measured values of a segment at a post-meal offset.
struct Measured<'a> {
    segment: &'a Segment,
    t: isize,
}

impl Bindings for Measured<'_> {
    fn value(&self, r: VarRef) -> Option<f64> {
        let at = self.t - r.lag as isize;
        (at >= -(HALF_WINDOW as isize)).then(|| self.segment.value(at, r.var))
    }
}

#[derive(Debug, Clone)]
pub struct Library {
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    pub columns: Vec<Column>,
}

/// One row per post-meal transition (offsets 0..8) of every segment, with
/// the glucose difference to the next sample as target.
pub fn build_library(segments: &[Segment], spec: &SindyLibrarySpec) -> Result<Library> {
    if segments.is_empty() {
        return Err(Error::Domain("no training segments".into()));
    }
    let columns = library_columns(spec)?;
    let rows = segments.len() * HORIZON;
    let mut theta = DMatrix::zeros(rows, columns.len());
    let mut target = DVector::zeros(rows);
    for (s, segment) in segments.iter().enumerate() {
        for i in 0..HORIZON {
            let r = s * HORIZON + i;
            let state = Measured { segment, t: i as isize };
            for (j, col) in columns.iter().enumerate() {
                theta[(r, j)] = col.expr.eval(&state)?;
            }
            target[r] = segment.value(i as isize + 1, VariableId::G) - segment.value(i as isize, VariableId::G);
        }
    }
    Ok(Library { theta, target, columns })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub ridge: f64,
    pub iterations: usize,
    /// Active columns before each ridge solve.
    pub active_history: Vec<Vec<bool>>,
}

fn ridge_solve(theta: &DMatrix<f64>, y: &DVector<f64>, active: &[usize], ridge: f64) -> Result<DVector<f64>> {
    let sub = theta.select_columns(active);
    let mut normal = sub.transpose() * &sub;
    for d in 0..active.len() {
        normal[(d, d)] += ridge;
    }
    let rhs = sub.transpose() * y;
    let scale = normal.diagonal().max().max(f64::MIN_POSITIVE);
    let singular = || Error::Numerical("singular normal equations in ridge solve".into());
    let ch = normal.cholesky().ok_or_else(singular)?;
    // A pivot this small relative to the diagonal means Θ is rank deficient
    // and the ridge term is too weak to fix it.
    let min_pivot = ch.l_dirty().diagonal().min();
    if min_pivot * min_pivot <= 1e-13 * scale {
        return Err(singular());
    }
    let solution = ch.solve(&rhs);
    if solution.iter().all(|x| x.is_finite()) {
        Ok(solution)
    } else {
        Err(Error::Numerical("non-finite ridge solution".into()))
    }
}

/// Sequentially thresholded ridge regression. `ridge` defaults to `lambda`.
pub fn stlsq(
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    max_iters: usize,
    ridge: Option<f64>,
) -> Result<SindyFit> {
    let n = theta.ncols();
    if theta.nrows() != y.len() {
        return Err(Error::Domain("design matrix and target differ in length".into()));
    }
    if theta.iter().chain(y.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite values in regression data".into()));
    }
    if theta.nrows() < n {
        warn!("regression has fewer rows ({}) than columns ({n})", theta.nrows());
    }
    let ridge = ridge.unwrap_or(lambda);
    let mut active = vec![true; n];
    let mut coefficients = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        let idx: Vec<usize> = (0..n).filter(|&j| active[j]).collect();
        history.push(active.clone());
        iterations += 1;
        coefficients.iter_mut().for_each(|c| *c = 0.0);
        if idx.is_empty() {
            break;
        }
        let solution = ridge_solve(theta, y, &idx, ridge)?;
        for (k, &j) in idx.iter().enumerate() {
            coefficients[j] = solution[k];
        }
        let next: Vec<bool> = (0..n).map(|j| active[j] && coefficients[j].abs() >= lambda).collect();
        if next == active {
            break;
        }
        active = next;
    }
    // Out of iterations with the support still shrinking.
    for c in &mut coefficients {
        if c.abs() < lambda {
            *c = 0.0;
        }
    }
    Ok(SindyFit {
        coefficients,
        lambda,
        ridge,
        iterations,
        active_history: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyReport {
    pub column_names: Vec<String>,
    /// Coefficients in the units of the original columns.
    pub coefficients: Vec<f64>,
    /// Coefficients as fitted on the scaled columns.
    pub scaled_coefficients: Vec<f64>,
    pub scales: Vec<f64>,
    pub standardized: bool,
    pub lambda: f64,
    pub ridge: f64,
    pub iterations: usize,
    pub expression: String,
}

/// Fits the library to the training segments and returns the model
/// `G + Σ ξ_j·column_j` with its report.
pub fn fit_sindy(
    segments: &[Segment],
    config: &SindyConfig,
    metadata: ModelMetadata,
) -> Result<(FdeModel, SindyReport)> {
    let lib = build_library(segments, &config.library)?;
    let (fit, coefficients, scales) = if config.standardize {
        standardized_fit(&lib, config)?
    } else {
        let fit = stlsq(&lib.theta, &lib.target, config.lambda, config.max_iters, config.ridge)?;
        let coefficients = fit.coefficients.clone();
        let n = coefficients.len();
        (fit, coefficients, vec![1.0; n])
    };

    let mut terms = Vec::new();
    let mut intercept = None;
    for (col, &c) in lib.columns.iter().zip(&coefficients) {
        if c == 0.0 {
            continue;
        }
        match col.expr {
            Expr::Const(k) => intercept = Some((c < 0.0, Expr::Const(c.abs() * k))),
            ref e => terms.push((c < 0.0, Expr::mul(Expr::Const(c.abs()), e.clone()))),
        }
    }
    terms.extend(intercept);
    let g = Expr::var(VariableId::G);
    let expr = match crate::expr::sum_of_terms(terms) {
        Some(inc) => Expr::add(g, inc),
        None => g,
    };
    let model = FdeModel::from_expr(ModelKind::Sindy, expr, metadata)?;
    let report = SindyReport {
        column_names: lib.columns.iter().map(|c| c.name.clone()).collect(),
        coefficients,
        scaled_coefficients: fit.coefficients,
        scales,
        standardized: config.standardize,
        lambda: fit.lambda,
        ridge: fit.ridge,
        iterations: fit.iterations,
        expression: model.canonical.clone(),
    };
    Ok((model, report))
}

/// Regression on centred, unit-variance columns. The intercept is
/// recovered from the column means afterwards and thresholded in its own
/// units; if it drops out, the support is refitted without centring.
/// Returns the fit on the scaled columns, the coefficients in original
/// units and the column scales.
fn standardized_fit(lib: &Library, config: &SindyConfig) -> Result<(SindyFit, Vec<f64>, Vec<f64>)> {
    let n = lib.columns.len();
    let constant: Option<usize> = lib.columns.iter().position(|c| matches!(c.expr, Expr::Const(_)));
    let varying: Vec<usize> = (0..n).filter(|&j| Some(j) != constant).collect();
    let rows = lib.theta.nrows() as f64;
    let mut scales = vec![1.0; n];
    let mut means = vec![0.0; n];
    for &j in &varying {
        let col = lib.theta.column(j);
        means[j] = col.sum() / rows;
        scales[j] = column_scale(col.iter().copied());
    }
    let mut z = lib.theta.select_columns(&varying);
    for (k, &j) in varying.iter().enumerate() {
        let mut col = z.column_mut(k);
        if constant.is_some() {
            col.add_scalar_mut(-means[j]);
        }
        col.unscale_mut(scales[j]);
    }
    let y_mean = lib.target.sum() / rows;
    let y = match constant {
        Some(_) => lib.target.add_scalar(-y_mean),
        None => lib.target.clone(),
    };

    let inner = if varying.is_empty() {
        SindyFit {
            coefficients: Vec::new(),
            lambda: config.lambda,
            ridge: config.ridge.unwrap_or(config.lambda),
            iterations: 0,
            active_history: Vec::new(),
        }
    } else {
        stlsq(&z, &y, config.lambda, config.max_iters, config.ridge)?
    };
    let mut scaled = vec![0.0; n];
    for (k, &j) in varying.iter().enumerate() {
        scaled[j] = inner.coefficients[k];
    }
    if let Some(c) = constant {
        let k = match lib.columns[c].expr {
            Expr::Const(k) => k,
            _ => unreachable!(),
        };
        let shift: f64 = varying.iter().map(|&j| scaled[j] / scales[j] * means[j]).sum();
        let b = (y_mean - shift) / k;
        if b.abs() >= config.lambda {
            scaled[c] = b;
        } else {
            let support: Vec<usize> = varying.iter().copied().filter(|&j| scaled[j] != 0.0).collect();
            if !support.is_empty() {
                let mut uncentred = lib.theta.select_columns(&support);
                for (k, &j) in support.iter().enumerate() {
                    uncentred.column_mut(k).unscale_mut(scales[j]);
                }
                let all: Vec<usize> = (0..support.len()).collect();
                let refit = ridge_solve(&uncentred, &lib.target, &all, inner.ridge)?;
                for (k, &j) in support.iter().enumerate() {
                    scaled[j] = if refit[k].abs() >= config.lambda { refit[k] } else { 0.0 };
                }
            }
        }
    }
    let coefficients = scaled.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let mut history = Vec::with_capacity(inner.active_history.len());
    for active in &inner.active_history {
        let mut full = vec![constant.is_some(); n];
        for (k, &j) in varying.iter().enumerate() {
            full[j] = active[k];
        }
        history.push(full);
    }
    let fit = SindyFit {
        coefficients: scaled,
        active_history: history,
        ..inner
    };
    Ok((fit, coefficients, scales))
}

/// Population standard deviation, or 1 for a (near) constant column so the
/// intercept keeps its units.
fn column_scale(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let mean = sum / count as f64;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    let sd = var.sqrt();
    if sd > 1e-12 * mean.abs().max(1.0) {
        sd
    } else {
        1.0
    }
}
