//! The Ruelle transfer operator
//!
//! ```text
//! (R_V f)(x) = 1/c(x1) · Σ_{a : A(a, x1) = 1} V(a x) f(a x)
//! ```
//!
//! on cylinder functions. A depth-`m` weight maps depth-`d` functions to depth
//! `max(m - 1, d - 1, 1)`, so depth `d >= max(m - 1, 1)` is closed under
//! `R_V` and the operator is a finite matrix there.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::reference::MarkovMeasure;
use crate::shift::{format_codes, CylinderFunction};

/// Default stopping tolerance for [`iterate_to_h`].
pub const DEFAULT_TOL: f64 = 1e-13;
/// Default iteration cap for [`iterate_to_h`].
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// `h_V` with `sup h_V` below this is reported as degenerate.
pub const DEGENERATE_SUP: f64 = 1e-9;
/// Largest pointwise increase tolerated between monotone iterates.
pub const MONOTONICITY_SLACK: f64 = 1e-12;
/// Singular values of `Tᵀ - I` at or below this count as eigenvalue 1.
pub const EIGENVALUE_ONE_TOL: f64 = 1e-10;

/// Smallest depth closed under `R_V` for a weight of depth `weight_depth`.
pub fn closed_depth(weight_depth: usize) -> usize {
    weight_depth.saturating_sub(1).max(1)
}

/// `R_V f`, at depth `max(depth(V) - 1, depth(f) - 1, 1)`.
pub fn apply_transfer(weight: &CylinderFunction, f: &CylinderFunction) -> Result<CylinderFunction> {
    if weight.shift() != f.shift() {
        return Err(Error::ShiftMismatch);
    }
    weight.check_nonnegative()?;
    let shift = weight.shift().clone();
    let depth = closed_depth(weight.depth()).max(f.depth().saturating_sub(1));
    let v = weight.lookup();
    let g = f.lookup();
    let mut aw = Vec::with_capacity(depth + 1);
    Ok(CylinderFunction::from_fn(shift.clone(), depth, |x| {
        aw.clear();
        aw.push(0);
        aw.extend_from_slice(x);
        let mut sum = 0.0;
        for a in shift.preimages(x[0]) {
            aw[0] = a;
            sum += v.get(&aw).expect("weight depth fits") * g.get(&aw).expect("function depth fits");
        }
        sum / shift.column_sum(x[0]) as f64
    }))
}

/// `R_V^n f`.
pub fn apply_transfer_n(weight: &CylinderFunction, f: &CylinderFunction, n: usize) -> Result<CylinderFunction> {
    let mut g = f.clone();
    for _ in 0..n {
        g = apply_transfer(weight, &g)?;
    }
    Ok(g)
}

/// Sparse rows of `R_V` at a fixed closed depth: `(R_V f)[w] = Σ coef · f[u]`.
#[derive(Clone, Debug)]
struct Stencil {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Stencil {
    fn new(weight: &CylinderFunction, depth: usize) -> Result<Self> {
        weight.check_nonnegative()?;
        let required = closed_depth(weight.depth());
        if depth < required {
            return Err(Error::DepthTooShallow {
                required,
                actual: depth,
            });
        }
        let shift = weight.shift();
        let layer = shift.layer(depth);
        let v = weight.lookup();
        let mut rows = Vec::with_capacity(layer.len());
        let mut aw = Vec::with_capacity(depth + 1);
        layer.for_each(|_, w| {
            aw.clear();
            aw.push(0);
            aw.extend_from_slice(w);
            let c = shift.column_sum(w[0]) as f64;
            let row = shift
                .preimages(w[0])
                .map(|a| {
                    aw[0] = a;
                    let u = layer.rank(&aw).expect("prefix of admissible word");
                    (u, v.get(&aw).expect("weight depth fits") / c)
                })
                .collect();
            rows.push(row);
        });
        Ok(Stencil { rows })
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(u, c)| c * f[u]).sum())
            .collect()
    }
}

/// Matrix of `R_V` on depth-`depth` cylinder functions; rows index the
/// output word, columns the input word, both in lexicographic order.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    weight: CylinderFunction,
    depth: usize,
    entries: DMatrix<f64>,
}

impl TransferMatrix {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Matrix action on a function of depth at most `depth`.
    pub fn apply(&self, f: &CylinderFunction) -> Result<CylinderFunction> {
        if f.shift() != self.weight.shift() {
            return Err(Error::ShiftMismatch);
        }
        let f = f.promote(self.depth)?;
        let x = nalgebra::DVector::from_column_slice(f.values());
        let y = &self.entries * x;
        CylinderFunction::from_values(self.weight.shift().clone(), self.depth, y.iter().copied().collect())
    }
}

pub fn transfer_matrix(weight: &CylinderFunction, depth: usize) -> Result<TransferMatrix> {
    let stencil = Stencil::new(weight, depth)?;
    let n = stencil.rows.len();
    let mut entries = DMatrix::zeros(n, n);
    for (w, row) in stencil.rows.iter().enumerate() {
        for &(u, c) in row {
            entries[(w, u)] += c;
        }
    }
    Ok(TransferMatrix {
        weight: weight.clone(),
        depth,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HStatus {
    Converged,
    /// The iterates decay to zero.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct HIteration {
    pub h: CylinderFunction,
    pub n_used: usize,
    pub status: HStatus,
    /// `‖R_V h - h‖_∞`.
    pub residual: f64,
}

/// `sup_x R_V(1)(x)`.
pub fn sup_transfer_of_one(weight: &CylinderFunction) -> Result<f64> {
    let one = CylinderFunction::constant(weight.shift().clone(), 1, 1.0);
    Ok(apply_transfer(weight, &one)?.sup())
}

/// Monotone iteration `h_n = R_V^n(1)` at the closed depth of `V`.
///
/// Requires `sup R_V(1) <= 1 + tol`; then `h_{n+1} <= h_n` pointwise and the
/// iterates decrease to `h_V` with `R_V h_V = h_V`. An increase larger than
/// [`MONOTONICITY_SLACK`] aborts with a diagnostic.
pub fn iterate_to_h(weight: &CylinderFunction, tol: f64, max_iter: usize) -> Result<HIteration> {
    let sup = sup_transfer_of_one(weight)?;
    if sup > 1.0 + tol {
        return Err(Error::NotSubNormalized { sup });
    }
    let depth = closed_depth(weight.depth());
    let stencil = Stencil::new(weight, depth)?;
    let shift = weight.shift().clone();
    let mut h = vec![1.0; stencil.rows.len()];
    let mut last_diff = f64::INFINITY;
    for n in 1..=max_iter {
        let next = stencil.apply(&h);
        let mut diff: f64 = 0.0;
        for (i, (&new, &old)) in next.iter().zip(&h).enumerate() {
            if new - old > MONOTONICITY_SLACK {
                return Err(Error::MonotonicityViolation {
                    iteration: n,
                    word: word_at(&shift, depth, i),
                    excess: new - old,
                });
            }
            diff = diff.max((new - old).abs());
        }
        h = next;
        last_diff = diff;
        if diff < tol {
            let residual = stencil
                .apply(&h)
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let h = CylinderFunction::from_values(shift, depth, h)?;
            let status = if h.sup() < DEGENERATE_SUP {
                HStatus::Degenerate
            } else {
                HStatus::Converged
            };
            return Ok(HIteration {
                h,
                n_used: n,
                status,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: last_diff,
    })
}

fn word_at(shift: &crate::shift::Subshift, depth: usize, index: usize) -> String {
    let mut found = String::new();
    shift.layer(depth).for_each(|i, w| {
        if i == index {
            found = format_codes(w, shift.alphabet_size());
        }
    });
    found
}

/// A probability functional with `ν ∘ R_V = ν`, stored as cylinder masses at
/// the closed depth of `V`.
#[derive(Clone, Debug)]
pub struct FixedFunctional {
    pub nu: CylinderFunction,
    /// More than one independent left fixed vector exists.
    pub non_unique: bool,
}

/// Left fixed vector of the transfer matrix at eigenvalue 1, normalized to a
/// probability vector; `None` when 1 is not an eigenvalue or no nonnegative
/// fixed vector is found.
pub fn left_fixed_functional(weight: &CylinderFunction) -> Result<Option<FixedFunctional>> {
    let depth = closed_depth(weight.depth());
    let matrix = transfer_matrix(weight, depth)?;
    let t = matrix.entries();
    let n = t.nrows();
    let shifted = t.transpose() - DMatrix::identity(n, n);
    let null = linalg::null_space(&shifted, |_| EIGENVALUE_ONE_TOL);
    if null.basis.is_empty() {
        return Ok(None);
    }
    let non_unique = null.basis.len() > 1;
    let as_probability = |v: &nalgebra::DVector<f64>| -> Option<Vec<f64>> {
        let total: f64 = v.iter().sum();
        if total.abs() < 1e-12 {
            return None;
        }
        let p: Vec<f64> = v.iter().map(|x| x / total).collect();
        if p.iter().all(|&x| x >= -1e-12) {
            Some(p.into_iter().map(|x| x.max(0.0)).collect())
        } else {
            None
        }
    };
    let mut candidate = null.basis.iter().find_map(as_probability);
    if candidate.is_none() {
        // Cesàro averages of νᵀ T^j project onto the eigenvalue-1 space
        let mut nu = nalgebra::DVector::from_element(n, 1.0 / n as f64);
        let mut avg = nalgebra::DVector::zeros(n);
        let tt = t.transpose();
        let steps = 20_000;
        for _ in 0..steps {
            avg += &nu;
            nu = &tt * nu;
        }
        avg /= steps as f64;
        let residual = (&tt * &avg - &avg).amax();
        if residual < 1e-9 {
            candidate = as_probability(&avg);
        }
    }
    match candidate {
        Some(p) => Ok(Some(FixedFunctional {
            nu: CylinderFunction::from_values(weight.shift().clone(), depth, p)?,
            non_unique,
        })),
        None => Ok(None),
    }
}

/// `ν(h) = Σ_w ν([w]) h(w)`, with `h` promoted to the depth of `ν`.
pub fn pairing(nu: &CylinderFunction, h: &CylinderFunction) -> Result<f64> {
    let h = h.promote(nu.depth())?;
    Ok(nu.values().iter().zip(h.values()).map(|(a, b)| a * b).sum())
}

/// `|∫ V^(n) f dρ - ∫ R_V^n(f) dρ|`, both sides computed on cylinders: the
/// left by materializing `V^(n) f`, the right by iterating `R_V`.
pub fn check_weight_pushforward(
    weight: &CylinderFunction,
    f: &CylinderFunction,
    rho: &MarkovMeasure,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("n must be at least 1".into()));
    }
    let lhs = rho.integrate(&weight.weight_product(n)?.mul(f)?);
    let rhs = rho.integrate(&apply_transfer_n(weight, f, n)?);
    Ok((lhs - rhs).abs())
}

/// Pointwise product `V W` at the common depth, so that `R_{VW}` can be
/// applied.
pub fn product_weight(v: &CylinderFunction, w: &CylinderFunction) -> Result<CylinderFunction> {
    v.check_nonnegative()?;
    w.check_nonnegative()?;
    v.mul(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::strongly_invariant_measure;
    use crate::shift::Subshift;
    use approx::assert_abs_diff_eq;

    fn func(shift: &std::sync::Arc<Subshift>, depth: usize, values: &[f64]) -> CylinderFunction {
        CylinderFunction::from_values(shift.clone(), depth, values.to_vec()).unwrap()
    }

    #[test]
    fn apply_transfer_examples() {
        let full = Subshift::full(2);
        let one = func(&full, 1, &[1.0, 1.0]);
        let f = func(&full, 1, &[3.0, 5.0]);
        assert_eq!(apply_transfer(&one, &f).unwrap().values(), &[4.0, 4.0]);

        let v = func(&full, 1, &[1.5, 0.5]);
        let chi1 = func(&full, 1, &[1.0, 0.0]);
        assert_eq!(apply_transfer(&v, &chi1).unwrap().values(), &[0.75, 0.75]);

        let golden = Subshift::golden_mean();
        let one = func(&golden, 1, &[1.0, 1.0]);
        let chi1 = func(&golden, 1, &[1.0, 0.0]);
        assert_eq!(apply_transfer(&one, &chi1).unwrap().values(), &[0.5, 1.0]);

        let neg = func(&full, 1, &[1.0, -1.0]);
        assert!(matches!(apply_transfer(&neg, &chi1.clone()), Err(Error::ShiftMismatch)));
        assert!(matches!(
            apply_transfer(&neg, &func(&full, 1, &[1.0, 0.0])),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn apply_transfer_output_depth() {
        let full = Subshift::full(2);
        let v3 = CylinderFunction::constant(full.clone(), 3, 1.0);
        let f2 = CylinderFunction::constant(full.clone(), 2, 1.0);
        assert_eq!(apply_transfer(&v3, &f2).unwrap().depth(), 2);
        let v1 = CylinderFunction::constant(full.clone(), 1, 1.0);
        let f4 = CylinderFunction::constant(full, 4, 1.0);
        assert_eq!(apply_transfer(&v1, &f4).unwrap().depth(), 3);
    }

    #[test]
    fn transfer_matrix_examples() {
        let full = Subshift::full(2);
        let m = transfer_matrix(&func(&full, 1, &[1.5, 0.5]), 1).unwrap();
        assert_eq!(m.entries(), &DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.75, 0.25]));
        let m = transfer_matrix(&func(&full, 1, &[1.0, 1.0]), 1).unwrap();
        assert_eq!(m.entries(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        let golden = Subshift::golden_mean();
        let m = transfer_matrix(&func(&golden, 1, &[1.0, 1.0]), 1).unwrap();
        assert_eq!(m.entries(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]));

        let deep = CylinderFunction::constant(full, 3, 1.0);
        assert_eq!(
            transfer_matrix(&deep, 1).unwrap_err(),
            Error::DepthTooShallow { required: 2, actual: 1 }
        );
    }

    #[test]
    fn matrix_matches_function_application_on_indicators() {
        let shift = Subshift::new(&[vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        let v = CylinderFunction::from_fn(shift.clone(), 2, |w| 0.3 + f64::from(w[0]) * 0.7 + f64::from(w[1]) * 0.2);
        for d in 1..=5 {
            let matrix = transfer_matrix(&v, d).unwrap();
            for w in shift.admissible_words(d) {
                let chi = CylinderFunction::indicator(shift.clone(), &w);
                let direct = apply_transfer(&v, &chi).unwrap().promote(d).unwrap();
                let via_matrix = matrix.apply(&chi).unwrap();
                assert!(direct.max_abs_diff(&via_matrix).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn iterate_to_h_examples() {
        let full = Subshift::full(2);
        let r = iterate_to_h(&func(&full, 1, &[1.0, 1.0]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.n_used, 1);
        assert_eq!(r.status, HStatus::Converged);
        assert_eq!(r.h.values(), &[1.0, 1.0]);

        let r = iterate_to_h(&func(&full, 1, &[0.5, 0.5]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.status, HStatus::Degenerate);
        assert!(r.h.sup() < DEGENERATE_SUP);

        let r = iterate_to_h(&func(&full, 1, &[1.5, 0.5]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.status, HStatus::Converged);
        assert_eq!(r.h.values(), &[1.0, 1.0]);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn iterate_to_h_errors() {
        let full = Subshift::full(2);
        assert!(matches!(
            iterate_to_h(&func(&full, 1, &[2.0, 1.0]), DEFAULT_TOL, DEFAULT_MAX_ITER),
            Err(Error::NotSubNormalized { .. })
        ));
        assert!(matches!(
            iterate_to_h(&func(&full, 1, &[0.999, 0.999]), DEFAULT_TOL, 5),
            Err(Error::NoConvergence { iterations: 5, .. })
        ));
    }

    #[test]
    fn reducible_system_keeps_nonconstant_h() {
        // A = [[1,1],[0,1]]: symbol 1 only has preimage 1, symbol 2 has {1,2}.
        // V(1) = 1, V(2) = 0 gives R_V(1) = (1, 1/2), and h_V = (1, 1/2).
        let shift = Subshift::new(&[vec![1, 1], vec![0, 1]]).unwrap();
        let v = func(&shift, 1, &[1.0, 0.0]);
        let r = iterate_to_h(&v, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(r.status, HStatus::Converged);
        assert_abs_diff_eq!(r.h.values()[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(r.h.values()[1], 0.5, epsilon = 1e-13);
    }

    #[test]
    fn left_fixed_functional_examples() {
        let full = Subshift::full(2);
        let nu = left_fixed_functional(&func(&full, 1, &[1.0, 1.0])).unwrap().unwrap();
        assert_abs_diff_eq!(nu.nu.values()[0], 0.5, epsilon = 1e-12);
        assert!(left_fixed_functional(&func(&full, 1, &[0.5, 0.5])).unwrap().is_none());
        let v = func(&full, 1, &[1.5, 0.5]);
        let nu = left_fixed_functional(&v).unwrap().unwrap();
        assert_abs_diff_eq!(nu.nu.values()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(nu.nu.values()[1], 0.25, epsilon = 1e-12);
        let h = iterate_to_h(&v, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().h;
        assert_abs_diff_eq!(pairing(&nu.nu, &h).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_pushforward_examples() {
        let full = Subshift::full(2);
        let rho = strongly_invariant_measure(full.clone());
        let v = func(&full, 1, &[1.5, 0.5]);
        let chi1 = func(&full, 1, &[1.0, 0.0]);
        assert!(check_weight_pushforward(&v, &chi1, &rho, 1).unwrap() <= 1e-15);

        let one = func(&full, 1, &[1.0, 1.0]);
        let f = func(&full, 2, &[0.1, 2.0, 0.7, 0.3]);
        for n in 1..=4 {
            assert!(check_weight_pushforward(&one, &f, &rho, n).unwrap() <= 1e-15);
        }

        let golden = Subshift::golden_mean();
        let rho = strongly_invariant_measure(golden.clone());
        let v = func(&golden, 1, &[1.0, 0.5]);
        let one = func(&golden, 1, &[1.0, 1.0]);
        let lhs = rho.integrate(&v.weight_product(2).unwrap());
        assert_abs_diff_eq!(lhs, 2.0 / 3.0, epsilon = 1e-15);
        assert!(check_weight_pushforward(&v, &one, &rho, 2).unwrap() <= 1e-15);
    }

    #[test]
    fn product_weight_examples() {
        let full = Subshift::full(2);
        let v = func(&full, 1, &[1.5, 0.5]);
        let one = func(&full, 1, &[1.0, 1.0]);
        assert_eq!(product_weight(&v, &one).unwrap().values(), v.values());
        let w = func(&full, 1, &[0.5, 1.5]);
        assert_eq!(product_weight(&v, &w).unwrap().values(), &[0.75, 0.75]);
        let w2 = func(&full, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = product_weight(&v, &w2).unwrap();
        assert_eq!(p.depth(), 2);
        assert_eq!(p.values(), &[1.5, 3.0, 1.5, 2.0]);
    }
}
