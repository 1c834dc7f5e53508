//! Mean-field coupling and field estimates from spin moments.
//!
//! With `A = diag(1 - m_i^2)`:
//!
//! * equilibrium:  `J = A^{-1} - C(0)^{-1}` (symmetric)
//! * synchronous:  `J = A^{-1} C(tau) C(0)^{-1}`
//! * asynchronous: `J = A^{-1} (dC/dtau at 0) C(0)^{-1}`
//!
//! and fields `h_i = atanh(m_i) - Σ_{j≠i} J_ij m_j` for every method.
//! Diagonal couplings are returned as the formulas produce them; downstream
//! summaries ignore them.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::MomentSet;

/// Inversions whose condition estimate exceeds this are refused.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Equilibrium,
    Synchronous,
    Asynchronous,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Equilibrium, Method::Synchronous, Method::Asynchronous];

    /// Short tag used in file names and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Equilibrium => "eq",
            Method::Synchronous => "syn",
            Method::Asynchronous => "asyn",
        }
    }

    pub fn is_directed(self) -> bool {
        self != Method::Equilibrium
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eq" | "equilibrium" => Ok(Method::Equilibrium),
            "syn" | "sync" | "synchronous" => Ok(Method::Synchronous),
            "asyn" | "async" | "asynchronous" => Ok(Method::Asynchronous),
            other => Err(Error::validation(format!("unknown inference method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingParams {
    pub dt: Option<usize>,
    pub chi: Option<f64>,
    /// Lag in seconds (synchronous only).
    pub tau: Option<usize>,
    pub lambda: f64,
}

/// An inferred interaction matrix with its fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    pub method: Method,
    pub j: DMatrix<f64>,
    pub h: DVector<f64>,
    pub directed: bool,
    pub params: CouplingParams,
    pub stocks: Vec<String>,
}

impl CouplingModel {
    pub fn n(&self) -> usize {
        self.j.nrows()
    }

    /// Square matrix with a ticker header row and column.
    pub fn write_couplings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.stocks.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.stocks.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.j.row(i).iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `ticker,value` pairs.
    pub fn write_fields_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ticker", "h"])?;
        for (name, h) in self.stocks.iter().zip(self.h.iter()) {
            w.write_record([name.clone(), format!("{h:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar describing how the matrix was obtained.
    pub fn write_params_json<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            method: Method,
            directed: bool,
            n: usize,
            params: &'a CouplingParams,
            stocks: &'a [String],
        }
        serde_json::to_writer_pretty(
            out,
            &Sidecar {
                method: self.method,
                directed: self.directed,
                n: self.n(),
                params: &self.params,
                stocks: &self.stocks,
            },
        )?;
        Ok(())
    }
}

/// `(c0 + lambda I)^{-1}`, refusing matrices whose condition estimate
/// exceeds [`DEFAULT_MAX_CONDITION`].
pub fn invert_c0(c0: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    invert_c0_bounded(c0, lambda, DEFAULT_MAX_CONDITION)
}

/// As [`invert_c0`] with an explicit condition bound. The condition estimate
/// is the ratio of extreme absolute eigenvalues of the symmetric input.
pub fn invert_c0_bounded(c0: &DMatrix<f64>, lambda: f64, max_condition: f64) -> Result<DMatrix<f64>> {
    if !c0.is_square() {
        return Err(Error::validation(format!("C(0) is {}x{}, not square", c0.nrows(), c0.ncols())));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::validation(format!("ridge term must be >= 0, got {lambda}")));
    }
    let n = c0.nrows();
    let scale = c0.amax().max(1.0);
    if (c0 - c0.transpose()).amax() > 1e-9 * scale {
        return Err(Error::validation("C(0) is not symmetric"));
    }
    if c0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("C(0) has non-finite entries"));
    }
    let regularized = c0 + DMatrix::identity(n, n) * lambda;
    let eig = SymmetricEigen::new(regularized.clone());
    let abs = eig.eigenvalues.map(f64::abs);
    let condition = if abs.min() == 0.0 { f64::INFINITY } else { abs.max() / abs.min() };
    if condition.is_nan() || condition > max_condition {
        return Err(Error::Singular {
            condition,
            bound: max_condition,
        });
    }
    regularized.lu().try_inverse().ok_or(Error::Singular {
        condition,
        bound: max_condition,
    })
}

fn check_magnetizations(m: &DVector<f64>) -> Result<()> {
    match m.iter().position(|v| v.is_nan() || v.abs() >= 1.0) {
        Some(i) => Err(Error::Domain(format!(
            "|m_{i}| = {} must be below 1; remove degenerate stocks first",
            m[i].abs()
        ))),
        None => Ok(()),
    }
}

fn check_shape(name: &str, c: &DMatrix<f64>, n: usize) -> Result<()> {
    if c.shape() != (n, n) {
        return Err(Error::validation(format!("{name} is {:?}, expected {n}x{n}", c.shape())));
    }
    Ok(())
}

/// `diag(1 / (1 - m_i^2)) * x`, i.e. row `i` scaled by `1 / (1 - m_i^2)`.
fn scale_rows(mut x: DMatrix<f64>, m: &DVector<f64>) -> DMatrix<f64> {
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row /= 1.0 - m[i] * m[i];
    }
    x
}

fn model(mom: &MomentSet, method: Method, j: DMatrix<f64>, tau: Option<usize>, lambda: f64) -> Result<CouplingModel> {
    let h = infer_fields(&j, &mom.m)?;
    if j.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{method} inference produced non-finite values")));
    }
    Ok(CouplingModel {
        method,
        directed: method.is_directed(),
        params: CouplingParams {
            dt: mom.mapping.map(|p| p.dt),
            chi: mom.mapping.map(|p| p.chi),
            tau,
            lambda,
        },
        stocks: mom.stocks.clone(),
        j,
        h,
    })
}

pub fn infer_equilibrium(mom: &MomentSet, lambda: f64) -> Result<CouplingModel> {
    check_magnetizations(&mom.m)?;
    let n = mom.n();
    check_shape("C(0)", &mom.c0, n)?;
    let inv = invert_c0(&mom.c0, lambda)?;
    let mut j = -inv;
    for i in 0..n {
        j[(i, i)] += 1.0 / (1.0 - mom.m[i] * mom.m[i]);
    }
    // Enforce exact symmetry; the inverse of a symmetric matrix is symmetric
    // only up to rounding.
    let j = (&j + j.transpose()) * 0.5;
    model(mom, Method::Equilibrium, j, None, lambda)
}

/// Synchronous estimate at lag `tau` seconds, which must be present in `mom`.
pub fn infer_synchronous(mom: &MomentSet, tau: usize, lambda: f64) -> Result<CouplingModel> {
    check_magnetizations(&mom.m)?;
    let n = mom.n();
    check_shape("C(0)", &mom.c0, n)?;
    let ct = mom
        .lag(tau)
        .ok_or_else(|| Error::validation(format!("no C(tau) for tau={tau} s in moment set")))?;
    check_shape("C(tau)", ct, n)?;
    let inv = invert_c0(&mom.c0, lambda)?;
    model(mom, Method::Synchronous, scale_rows(ct * inv, &mom.m), Some(tau), lambda)
}

pub fn infer_asynchronous(mom: &MomentSet, lambda: f64) -> Result<CouplingModel> {
    check_magnetizations(&mom.m)?;
    let n = mom.n();
    check_shape("C(0)", &mom.c0, n)?;
    let dc = mom
        .dc
        .as_ref()
        .ok_or_else(|| Error::validation("moment set has no correlation derivative"))?;
    check_shape("dC/dtau", dc, n)?;
    let inv = invert_c0(&mom.c0, lambda)?;
    model(mom, Method::Asynchronous, scale_rows(dc * inv, &mom.m), None, lambda)
}

/// `h_i = atanh(m_i) - Σ_{j≠i} J_ij m_j`.
pub fn infer_fields(j: &DMatrix<f64>, m: &DVector<f64>) -> Result<DVector<f64>> {
    check_magnetizations(m)?;
    check_shape("J", j, m.len())?;
    let jm = j * m;
    Ok(DVector::from_fn(m.len(), |i, _| m[i].atanh() - (jm[i] - j[(i, i)] * m[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn inverse_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(close(&invert_c0(&id, 0.0).unwrap(), &id, 1e-15));

        let c = dmatrix![1.0, 0.5; 0.5, 1.0];
        let expected = dmatrix![4.0 / 3.0, -2.0 / 3.0; -2.0 / 3.0, 4.0 / 3.0];
        assert!(close(&invert_c0(&c, 0.0).unwrap(), &expected, 1e-14));

        let singular = dmatrix![1.0, 1.0; 1.0, 1.0];
        let err = invert_c0(&singular, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(err.to_string().contains("lambda"));
        // a ridge term is the escape hatch
        assert!(invert_c0(&singular, 0.1).is_ok());
        assert!(invert_c0(&dmatrix![1.0, 0.2; 0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        let mom = MomentSet::from_parts(dvector![0.0, 0.0], dmatrix![1.0, 0.5; 0.5, 1.0]);
        let model = infer_equilibrium(&mom, 0.0).unwrap();
        assert!((model.j[(0, 1)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((model.j[(0, 0)] + 1.0 / 3.0).abs() < 1e-12);
        assert!(!model.directed);

        let mom = MomentSet::from_parts(dvector![0.0, 0.0, 0.0], DMatrix::identity(3, 3));
        assert!(infer_equilibrium(&mom, 0.0).unwrap().j.amax() < 1e-15);

        let m = 0.3;
        let mom = MomentSet::from_parts(dvector![m], dmatrix![1.0 - m * m]);
        assert!(infer_equilibrium(&mom, 0.0).unwrap().j[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn synchronous_examples() {
        let c0 = dmatrix![1.0, 0.3; 0.3, 1.0];
        let mom = MomentSet::from_parts(dvector![0.0, 0.0], c0.clone()).with_lag(5, c0);
        let j = infer_synchronous(&mom, 5, 0.0).unwrap().j;
        assert!(close(&j, &DMatrix::identity(2, 2), 1e-12));

        let ct = dmatrix![0.2, 0.1; 0.0, 0.2];
        let mom = MomentSet::from_parts(dvector![0.0, 0.0], DMatrix::identity(2, 2)).with_lag(1, ct.clone());
        let model = infer_synchronous(&mom, 1, 0.0).unwrap();
        assert!(close(&model.j, &ct, 1e-15));
        assert!(model.directed);
        assert!(infer_synchronous(&mom, 2, 0.0).is_err());

        let mom = MomentSet::from_parts(dvector![0.5, 0.0], DMatrix::identity(2, 2)).with_lag(1, DMatrix::identity(2, 2));
        let j = infer_synchronous(&mom, 1, 0.0).unwrap().j;
        assert!((j[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((j[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asynchronous_examples() {
        let base = MomentSet::from_parts(dvector![0.0, 0.0], DMatrix::identity(2, 2));
        assert!(infer_asynchronous(&base, 0.0).is_err());

        let zero = base.clone().with_derivative(DMatrix::zeros(2, 2));
        assert_eq!(infer_asynchronous(&zero, 0.0).unwrap().j, DMatrix::zeros(2, 2));

        let d = dmatrix![-0.5, 0.1; 0.2, -0.4];
        let model = infer_asynchronous(&base.with_derivative(d.clone()), 0.0).unwrap();
        assert!(close(&model.j, &d, 1e-15));

        let mom = MomentSet::from_parts(dvector![0.2, -0.4], dmatrix![0.96, 0.1; 0.1, 0.84]);
        let once = infer_asynchronous(&mom.clone().with_derivative(d.clone()), 0.0).unwrap().j;
        let twice = infer_asynchronous(&mom.with_derivative(d * 2.0), 0.0).unwrap().j;
        assert!(close(&twice, &(once * 2.0), 1e-14));
    }

    #[test]
    fn field_examples() {
        let h = infer_fields(&dmatrix![3.0, 1.0; -2.0, 5.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(h, dvector![0.0, 0.0]);

        let h = infer_fields(&dmatrix![9.0, 0.2; 0.1, 9.0], &dvector![0.5, 0.0]).unwrap();
        assert!((h[0] - 0.5493061443340549).abs() < 1e-15);
        assert!((h[1] + 0.05).abs() < 1e-15);

        let h = infer_fields(&DMatrix::zeros(2, 2), &dvector![0.5, 0.5]).unwrap();
        assert!((h[1] - 0.5_f64.atanh()).abs() < 1e-15);

        assert!(matches!(
            infer_fields(&DMatrix::zeros(1, 1), &dvector![1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("mf".parse::<Method>().is_err());
    }

    #[test]
    fn csv_outputs() {
        let mom = MomentSet::from_parts(dvector![0.0, 0.0], dmatrix![1.0, 0.5; 0.5, 1.0]);
        let model = infer_equilibrium(&mom, 0.0).unwrap();
        let mut buf = Vec::new();
        model.write_couplings_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(",s0,s1\ns0,"));
        assert_eq!(text.lines().count(), 3);
        let mut buf = Vec::new();
        model.write_fields_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ticker,h\ns0,0e0\ns1,0e0\n");
    }

    fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose() + DMatrix::identity(n, n) * 0.5
        })
    }

    proptest! {
        #[test]
        fn inverse_is_accurate(c in (1usize..8).prop_flat_map(spd)) {
            let inv = invert_c0(&c, 0.0).unwrap();
            let n = c.nrows();
            prop_assert!((&inv * &c - DMatrix::identity(n, n)).amax() < 1e-8);
        }

        #[test]
        fn equilibrium_is_symmetric(c in (2usize..8).prop_flat_map(spd)) {
            // rescale to a correlation-like matrix with unit diagonal
            let d = c.diagonal().map(|v| 1.0 / v.sqrt());
            let corr = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * d[i] * d[j]);
            let mom = MomentSet::from_parts(DVector::zeros(c.nrows()), corr);
            let j = infer_equilibrium(&mom, 0.0).unwrap().j;
            prop_assert!((&j - j.transpose()).amax() <= 1e-10 * j.amax().max(1.0));
        }
    }
}
