//! Least-squares estimators for the time series produced by the simulations.
//!
//! Linearizable models (exponential, power law) are fitted in their
//! logarithmic form; the exponential-plus-constant model uses a
//! Levenberg-Marquardt solver on the untransformed data. All standard errors
//! are one-sigma estimates from the residual covariance.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("window holds {found} points, need at least {needed}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("non-positive value {value} at index {index} under a log model")]
    NonPositive { index: usize, value: f64 },
    #[error("x and y lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("normal equations are singular")]
    Singular,
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("poor fit: {0}")]
    Quality(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `y = a x + b`; coefficients `[a, b]`.
    Linear,
    /// `y = a x`; coefficients `[a]`.
    LinearZeroIntercept,
    /// `y = A exp(-r x)`; coefficients `[A, r]`.
    Exponential,
    /// `y = c + A exp(-r x)`; coefficients `[c, A, r]`.
    ExponentialPlusConstant,
    /// `y = A x^b`; coefficients `[A, b]`.
    PowerLaw,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Linear => "linear",
            FitModel::LinearZeroIntercept => "linear0",
            FitModel::Exponential => "exponential",
            FitModel::ExponentialPlusConstant => "exponential_plus_constant",
            FitModel::PowerLaw => "power_law",
        }
    }

    pub fn coefficient_names(self) -> &'static [&'static str] {
        match self {
            FitModel::Linear => &["slope", "intercept"],
            FitModel::LinearZeroIntercept => &["slope"],
            FitModel::Exponential => &["amplitude", "rate"],
            FitModel::ExponentialPlusConstant => &["constant", "amplitude", "rate"],
            FitModel::PowerLaw => &["amplitude", "exponent"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficient {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub coefficients: Vec<Coefficient>,
    /// 2-norm of residuals in the space the fit was performed in.
    pub residual_norm: f64,
    /// Smallest and largest `x` actually used.
    pub window: (f64, f64),
    pub points: usize,
}

impl FitResult {
    pub fn value(&self, i: usize) -> f64 {
        self.coefficients[i].value
    }

    pub fn stderr(&self, i: usize) -> f64 {
        self.coefficients[i].stderr
    }

    /// Evaluates the fitted model at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        let c = |i: usize| self.coefficients[i].value;
        match self.model {
            FitModel::Linear => c(0) * x + c(1),
            FitModel::LinearZeroIntercept => c(0) * x,
            FitModel::Exponential => c(0) * (-c(1) * x).exp(),
            FitModel::ExponentialPlusConstant => c(0) + c(1) * (-c(2) * x).exp(),
            FitModel::PowerLaw => c(0) * x.powf(c(1)),
        }
    }

    /// `key=value` lines for run metadata, prefixed by `prefix`.
    pub fn to_key_values(&self, prefix: &str) -> Vec<(String, String)> {
        let mut out = vec![
            (format!("{prefix}.model"), self.model.name().to_string()),
            (format!("{prefix}.points"), self.points.to_string()),
            (format!("{prefix}.window"), format!("{:e},{:e}", self.window.0, self.window.1)),
            (format!("{prefix}.residual_norm"), format!("{:.16e}", self.residual_norm)),
        ];
        for (name, c) in self.model.coefficient_names().iter().zip(&self.coefficients) {
            out.push((format!("{prefix}.{name}"), format!("{:.16e}", c.value)));
            out.push((format!("{prefix}.{name}_err"), format!("{:.16e}", c.stderr)));
        }
        out
    }
}

fn select(x: &[f64], y: &[f64], window: Option<(f64, f64)>) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(&xi, _)| xi >= lo && xi <= hi)
        .map(|(&a, &b)| (a, b))
        .unzip();
    Ok((xs, ys))
}

fn require_points(n: usize, needed: usize) -> Result<(), FitError> {
    if n < needed {
        Err(FitError::TooFewPoints { needed, found: n })
    } else {
        Ok(())
    }
}

fn log_values(v: &[f64]) -> Result<Vec<f64>, FitError> {
    v.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 && value.is_finite() {
                Ok(value.ln())
            } else {
                Err(FitError::NonPositive { index, value })
            }
        })
        .collect()
}

/// Ordinary least squares on the columns of `design`; returns estimates,
/// standard errors and the residual norm.
fn ols(design: DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), FitError> {
    let n = design.nrows();
    let p = design.ncols();
    let yv = DVector::from_column_slice(y);
    let normal = design.transpose() * &design;
    let inv = normal.clone().try_inverse().ok_or(FitError::Singular)?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(FitError::Singular);
    }
    let beta = design
        .clone()
        .svd(true, true)
        .solve(&yv, 1e-300)
        .map_err(|_| FitError::Singular)?;
    let resid = &yv - &design * &beta;
    let rss = resid.norm_squared();
    let dof = n.saturating_sub(p).max(1) as f64;
    let sigma2 = rss / dof;
    let errs = (0..p).map(|i| (sigma2 * inv[(i, i)]).max(0.0).sqrt()).collect();
    Ok((beta.iter().copied().collect(), errs, rss.sqrt()))
}

fn linear(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), FitError> {
    require_points(x.len(), 3)?;
    // Centering keeps the normal equations well conditioned at large x.
    let xm = x.iter().sum::<f64>() / x.len() as f64;
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i] - xm } else { 1.0 });
    let (b, e, r) = ols(design, y)?;
    let slope = b[0];
    let intercept = b[1] - slope * xm;
    let intercept_err = (e[1] * e[1] + (xm * e[0]).powi(2)).sqrt();
    Ok((vec![slope, intercept], vec![e[0], intercept_err], r))
}

fn coefficients(values: Vec<f64>, errs: Vec<f64>) -> Vec<Coefficient> {
    values
        .into_iter()
        .zip(errs)
        .map(|(value, stderr)| Coefficient { value, stderr })
        .collect()
}

fn window_of(x: &[f64]) -> (f64, f64) {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Fits `model` to the points whose `x` lies in the inclusive `window`.
pub fn fit_series(
    x: &[f64],
    y: &[f64],
    model: FitModel,
    window: Option<(f64, f64)>,
) -> Result<FitResult, FitError> {
    let (xs, ys) = select(x, y, window)?;
    let points = xs.len();
    let (values, errs, residual_norm) = match model {
        FitModel::Linear => linear(&xs, &ys)?,
        FitModel::LinearZeroIntercept => {
            require_points(points, 3)?;
            let design = DMatrix::from_column_slice(points, 1, &xs);
            ols(design, &ys)?
        }
        FitModel::Exponential => {
            require_points(points, 3)?;
            let ly = log_values(&ys)?;
            let (b, e, r) = linear(&xs, &ly)?;
            let amp = b[1].exp();
            (vec![amp, -b[0]], vec![amp * e[1], e[0]], r)
        }
        FitModel::PowerLaw => {
            require_points(points, 3)?;
            let lx = log_values(&xs)?;
            let ly = log_values(&ys)?;
            let (b, e, r) = linear(&lx, &ly)?;
            let amp = b[1].exp();
            (vec![amp, b[0]], vec![amp * e[1], e[0]], r)
        }
        FitModel::ExponentialPlusConstant => {
            require_points(points, 4)?;
            return exp_plus_constant(&xs, &ys, None);
        }
    };
    Ok(FitResult {
        model,
        coefficients: coefficients(values, errs),
        residual_norm,
        window: window_of(&xs),
        points,
    })
}

/// Exponential-plus-constant fit with the constant held at `constant`.
///
/// The returned result keeps the three-coefficient layout; the fixed
/// constant is reported with zero error.
pub fn fit_exp_fixed_constant(
    x: &[f64],
    y: &[f64],
    constant: f64,
    window: Option<(f64, f64)>,
) -> Result<FitResult, FitError> {
    let (xs, ys) = select(x, y, window)?;
    require_points(xs.len(), 3)?;
    exp_plus_constant(&xs, &ys, Some(constant))
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len() });
    }
    require_points(x.len(), 3)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FitError::Singular);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// `y = c + A exp(-r (x - x0))`, with `x0` the first abscissa of the window.
struct ExpConstProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    x0: f64,
    fixed_c: Option<f64>,
    // [c, A, r] or [A, r] when the constant is fixed
    theta: DVector<f64>,
}

impl ExpConstProblem<'_> {
    fn unpack(&self, t: &DVector<f64>) -> (f64, f64, f64) {
        match self.fixed_c {
            Some(c) => (c, t[0], t[1]),
            None => (t[0], t[1], t[2]),
        }
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for ExpConstProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.theta.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.theta.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (c, a, r) = self.unpack(&self.theta);
        Some(DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&xi, &yi)| c + a * (-r * (xi - self.x0)).exp() - yi),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let (_, a, r) = self.unpack(&self.theta);
        let p = self.theta.len();
        let off = p - 2;
        let mut j = DMatrix::zeros(self.x.len(), p);
        for (i, &xi) in self.x.iter().enumerate() {
            let dx = xi - self.x0;
            let e = (-r * dx).exp();
            if off == 1 {
                j[(i, 0)] = 1.0;
            }
            j[(i, off)] = e;
            j[(i, off + 1)] = -a * dx * e;
        }
        Some(j)
    }
}

fn exp_plus_constant(x: &[f64], y: &[f64], fixed_c: Option<f64>) -> Result<FitResult, FitError> {
    let n = x.len();
    let x0 = x[0];
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let decreasing = y[0] >= y[n - 1];
    let (c0, a0) = match fixed_c {
        Some(c) => (c, y[0] - c),
        None if decreasing => (y_min, y_max - y_min),
        None => (y_max, y_min - y_max),
    };
    let mid = n / 2;
    let span = x[n - 1] - x0;
    let ratio = (y[0] - y[n - 1]) / (y[mid] - y[n - 1]);
    let dx = x[mid] - x0;
    let mut r0 = if ratio.is_finite() && ratio > 1.0 && dx > 0.0 {
        ratio.ln() / dx
    } else {
        1.0 / span.max(f64::MIN_POSITIVE)
    };
    if fixed_c.is_some() {
        let (a, b) = (y[0] - c0, y[mid] - c0);
        if a / b > 0.0 && dx > 0.0 {
            r0 = (a / b).ln() / dx;
        }
    }
    let theta = match fixed_c {
        Some(_) => DVector::from_vec(vec![a0, r0]),
        None => DVector::from_vec(vec![c0, a0, r0]),
    };
    let p = theta.len();
    let problem = ExpConstProblem { x, y, x0, fixed_c, theta };
    let (problem, report) = LevenbergMarquardt::new()
        .with_xtol(1e-10)
        .with_ftol(1e-15)
        .with_patience(500 / (p + 1))
        .minimize(problem);
    if !report.termination.was_successful() {
        return Err(FitError::NoConvergence(format!("{:?}", report.termination)));
    }
    let (c, a, r) = problem.unpack(&problem.theta);
    let resid = problem.residuals().ok_or(FitError::Singular)?;
    let jac = problem.jacobian().ok_or(FitError::Singular)?;
    let rss = resid.norm_squared();
    let cov_unscaled = (jac.transpose() * &jac).try_inverse().ok_or(FitError::Singular)?;
    let sigma2 = rss / (n.saturating_sub(p).max(1)) as f64;
    let cov = cov_unscaled * sigma2;
    let off = p - 2;
    // Shift the amplitude back to the x = 0 origin of the model.
    let shift = (r * x0).exp();
    let amp = a * shift;
    let var_amp = shift * shift
        * (cov[(off, off)] + 2.0 * a * x0 * cov[(off, off + 1)] + (a * x0).powi(2) * cov[(off + 1, off + 1)]);
    let c_err = if off == 1 { cov[(0, 0)].max(0.0).sqrt() } else { 0.0 };
    let coeffs = vec![
        Coefficient { value: c, stderr: c_err },
        Coefficient { value: amp, stderr: var_amp.max(0.0).sqrt() },
        Coefficient { value: r, stderr: cov[(off + 1, off + 1)].max(0.0).sqrt() },
    ];
    if !coeffs.iter().all(|c| c.value.is_finite()) {
        return Err(FitError::NoConvergence("non-finite coefficients".into()));
    }
    Ok(FitResult {
        model: FitModel::ExponentialPlusConstant,
        coefficients: coeffs,
        residual_norm: rss.sqrt(),
        window: window_of(x),
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, dx: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dx).collect()
    }

    #[test]
    fn exact_line() {
        let x = grid(10, 1.0);
        let y: Vec<f64> = x.iter().map(|x| 3.0 * x + 1.0).collect();
        let f = fit_series(&x, &y, FitModel::Linear, None).unwrap();
        assert_relative_eq!(f.value(0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.value(1), 1.0, epsilon = 1e-12);
        assert!(f.residual_norm < 1e-12);
    }

    #[test]
    fn zero_intercept_slope() {
        let x = grid(8, 0.5);
        let y: Vec<f64> = x.iter().map(|x| -0.25 * x).collect();
        let f = fit_series(&x, &y, FitModel::LinearZeroIntercept, None).unwrap();
        assert_relative_eq!(f.value(0), -0.25, max_relative = 1e-12);
    }

    #[test]
    fn exponential_and_power_law_noiseless() {
        let x: Vec<f64> = (1..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.5 * (-0.07 * x).exp()).collect();
        let f = fit_series(&x, &y, FitModel::Exponential, None).unwrap();
        assert_relative_eq!(f.value(0), 2.5, max_relative = 1e-8);
        assert_relative_eq!(f.value(1), 0.07, max_relative = 1e-8);

        let y: Vec<f64> = x.iter().map(|x| 0.3 * x.powf(-1.1)).collect();
        let f = fit_series(&x, &y, FitModel::PowerLaw, None).unwrap();
        assert_relative_eq!(f.value(0), 0.3, max_relative = 1e-8);
        assert_relative_eq!(f.value(1), -1.1, max_relative = 1e-8);
    }

    #[test]
    fn exp_plus_constant_noiseless() {
        let x = grid(200, 15.0);
        let y: Vec<f64> = x.iter().map(|x| 2.0 + 0.8 * (-x / 300.0).exp()).collect();
        let f = fit_series(&x, &y, FitModel::ExponentialPlusConstant, None).unwrap();
        assert_relative_eq!(f.value(0), 2.0, max_relative = 1e-8);
        assert_relative_eq!(f.value(1), 0.8, max_relative = 1e-8);
        assert_relative_eq!(f.value(2), 1.0 / 300.0, max_relative = 1e-8);
    }

    #[test]
    fn rising_toward_constant() {
        let x: Vec<f64> = (0..100).map(|i| 1000.0 + 10.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.95 - 0.4 * (-x / 500.0).exp()).collect();
        let f = fit_series(&x, &y, FitModel::ExponentialPlusConstant, None).unwrap();
        assert_relative_eq!(f.value(0), 1.95, max_relative = 1e-8);
        assert_relative_eq!(f.value(1), -0.4, max_relative = 1e-7);
        assert_relative_eq!(f.value(2), 1.0 / 500.0, max_relative = 1e-8);
    }

    #[test]
    fn fixed_zero_constant_matches_exponential() {
        let x = grid(50, 2.0);
        let y: Vec<f64> = x.iter().map(|x| 1.7 * (-0.02 * x).exp()).collect();
        let e = fit_series(&x, &y, FitModel::Exponential, None).unwrap();
        let c = fit_exp_fixed_constant(&x, &y, 0.0, None).unwrap();
        assert_relative_eq!(e.value(0), c.value(1), max_relative = 1e-8);
        assert_relative_eq!(e.value(1), c.value(2), max_relative = 1e-8);
    }

    #[test]
    fn window_is_respected() {
        let x = grid(20, 1.0);
        let mut y: Vec<f64> = x.iter().map(|x| 2.0 * x).collect();
        y[0] = f64::NAN;
        y[19] = 1e9;
        let f = fit_series(&x, &y, FitModel::Linear, Some((1.0, 18.0))).unwrap();
        assert_eq!(f.window, (1.0, 18.0));
        assert_eq!(f.points, 18);
        assert_relative_eq!(f.value(0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let x = [1.0, 2.0];
        assert!(matches!(
            fit_series(&x, &x, FitModel::Linear, None),
            Err(FitError::TooFewPoints { .. })
        ));
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, -1.0, 2.0];
        assert!(matches!(
            fit_series(&x, &y, FitModel::Exponential, None),
            Err(FitError::NonPositive { index: 1, .. })
        ));
        let y = [1.0, 1.0, 1.0];
        let x = [2.0, 2.0, 2.0];
        assert!(matches!(
            fit_series(&x, &y, FitModel::Linear, None),
            Err(FitError::Singular)
        ));
    }

    #[test]
    fn pearson_of_affine_pair() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b: Vec<f64> = a.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert_relative_eq!(pearson(&a, &b).unwrap(), -1.0, epsilon = 1e-14);
    }
}
