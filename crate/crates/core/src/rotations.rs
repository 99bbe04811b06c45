//! Polar (Givens) parameterization of `p × d` orthonormal frames.
//!
//! A frame is the first `d` columns of `D_0(φ_0) D_1(φ_1) ⋯ D_{m-1}(φ_{m-1})`,
//! where `D_t` is a plane rotation in coordinates `(i, j)` with `i < d` and
//! `i < j < p`. The single index `t` enumerates the pairs with `j` varying
//! fastest. All indices in this module are 0-based.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{CssError, Result};

/// Number of angles needed for a `p × d` frame: `pd − d(d+1)/2`.
pub fn angle_count(p: usize, d: usize) -> usize {
    p * d - d * (d + 1) / 2
}

fn row_offset(i: usize, p: usize) -> usize {
    i * p - i * (i + 1) / 2
}

/// Single index of the rotation plane `(i, j)`.
pub fn index_forward(i: usize, j: usize, p: usize, d: usize) -> Result<usize> {
    if i >= d || j <= i || j >= p {
        return Err(CssError::IndexOutOfRange(format!(
            "plane ({i}, {j}) invalid for p = {p}, d = {d}"
        )));
    }
    Ok(row_offset(i, p) + (j - i - 1))
}

/// Rotation plane `(i, j)` for single index `t`.
pub fn index_backward(t: usize, p: usize, d: usize) -> Result<(usize, usize)> {
    let m = angle_count(p, d);
    if t >= m {
        return Err(CssError::IndexOutOfRange(format!(
            "angle index {t} out of range (m = {m})"
        )));
    }
    let i = (0..d).rev().find(|&i| row_offset(i, p) <= t).unwrap_or(0);
    Ok((i, t - row_offset(i, p) + i + 1))
}

/// All rotation planes in ascending `t` order.
pub fn planes(p: usize, d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .collect()
}

/// The full `p × p` plane rotation with `cos` at `(i,i)` and `(j,j)`,
/// `−sin` at `(i,j)` and `sin` at `(j,i)`.
pub fn givens(p: usize, i: usize, j: usize, angle: f64) -> Result<DMatrix<f64>> {
    if i >= j || j >= p {
        return Err(CssError::IndexOutOfRange(format!(
            "plane ({i}, {j}) invalid for p = {p}"
        )));
    }
    let mut g = DMatrix::identity(p, p);
    let (s, c) = angle.sin_cos();
    g[(i, i)] = c;
    g[(j, j)] = c;
    g[(i, j)] = -s;
    g[(j, i)] = s;
    Ok(g)
}

/// Angles parameterizing a `p × d` orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleVector {
    phi: Vec<f64>,
    p: usize,
    d: usize,
}

impl AngleVector {
    pub fn new(phi: Vec<f64>, p: usize, d: usize) -> Result<Self> {
        if d == 0 || d > p {
            return Err(CssError::InvalidParameter(format!(
                "frame width d = {d} must satisfy 1 <= d <= p = {p}"
            )));
        }
        let m = angle_count(p, d);
        if phi.len() != m {
            return Err(CssError::Dimension(format!(
                "{} angles given, p = {p}, d = {d} needs {m}",
                phi.len()
            )));
        }
        if phi.iter().any(|a| !a.is_finite()) {
            return Err(CssError::InvalidParameter("non-finite angle".into()));
        }
        Ok(Self { phi, p, d })
    }

    pub fn zeros(p: usize, d: usize) -> Result<Self> {
        Self::new(vec![0.0; angle_count(p, d)], p, d)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.phi.len()
    }

    pub(crate) fn with_phi(&self, phi: Vec<f64>) -> Self {
        debug_assert_eq!(phi.len(), self.phi.len());
        Self {
            phi,
            p: self.p,
            d: self.d,
        }
    }

    /// The frame `η(φ)`.
    pub fn eta(&self) -> BasisMatrix {
        let mut slab = first_columns(self.p, self.d);
        let planes = planes(self.p, self.d);
        for (t, &(i, j)) in planes.iter().enumerate().rev() {
            rotate_rows(&mut slab, i, j, self.phi[t]);
        }
        BasisMatrix(slab)
    }

    /// `∂η/∂φ_t`.
    pub fn eta_dot(&self, t: usize) -> Result<DMatrix<f64>> {
        let m = self.m();
        if t >= m {
            return Err(CssError::IndexOutOfRange(format!(
                "angle index {t} out of range (m = {m})"
            )));
        }
        let planes = planes(self.p, self.d);
        let mut slab = first_columns(self.p, self.d);
        for u in (t + 1..m).rev() {
            let (i, j) = planes[u];
            rotate_rows(&mut slab, i, j, self.phi[u]);
        }
        let (i, j) = planes[t];
        differentiate_rows(&mut slab, i, j, self.phi[t]);
        for u in (0..t).rev() {
            let (i, j) = planes[u];
            rotate_rows(&mut slab, i, j, self.phi[u]);
        }
        Ok(slab)
    }

    /// All derivatives `∂η/∂φ_t`, `t = 0..m`.
    pub fn eta_dots(&self) -> Vec<DMatrix<f64>> {
        (0..self.m())
            .map(|t| self.eta_dot(t).expect("t < m"))
            .collect()
    }

    /// Map every angle into `[0, π)` without changing the spanned subspace.
    ///
    /// Shifting `φ_t` by `π` negates rows `i_t, j_t` of the rotation; that sign
    /// flip is pushed through the later rotations (negating the angles whose
    /// plane shares exactly one coordinate with `(i_t, j_t)`) and ends as a
    /// sign change of frame columns. Angles already in range are untouched.
    pub fn wrap(&self) -> AngleVector {
        let planes = planes(self.p, self.d);
        let mut phi = self.phi.clone();
        for t in 0..phi.len() {
            let mut a = phi[t].rem_euclid(2.0 * PI);
            let mut flips = 0;
            while a >= PI {
                a -= PI;
                flips += 1;
            }
            phi[t] = a;
            if flips % 2 == 1 {
                let (it, jt) = planes[t];
                for u in t + 1..phi.len() {
                    let (iu, ju) = planes[u];
                    let hits = [iu, ju].iter().filter(|&&k| k == it || k == jt).count();
                    if hits == 1 {
                        phi[u] = -phi[u];
                    }
                }
            }
        }
        self.with_phi(phi)
    }
}

/// A `p × d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(pub(crate) DMatrix<f64>);

impl BasisMatrix {
    /// Wrap a matrix, checking `ηᵀη = I` to `tol`.
    pub fn new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let dev = orthonormality_error(&m);
        if dev > tol {
            return Err(CssError::NotOrthonormal(dev));
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    /// Angles `φ ∈ [0, π)^m` with `η(φ)` equal to this frame up to column signs.
    ///
    /// Column `i` is reduced to `±e_i` by rotations in the planes
    /// `(i, i+1), …, (i, p−1)`, applied in ascending `t` order.
    pub fn to_angles(&self) -> AngleVector {
        let (p, d) = self.0.shape();
        let mut work = self.0.clone();
        let mut phi = Vec::with_capacity(angle_count(p, d));
        for i in 0..d {
            for j in i + 1..p {
                let a = work[(i, i)];
                let b = work[(j, i)];
                let mut angle = b.atan2(a);
                if angle < 0.0 {
                    angle += PI;
                }
                if angle >= PI {
                    angle -= PI;
                }
                // apply Dᵀ(angle) to rows i, j
                rotate_rows(&mut work, i, j, -angle);
                phi.push(angle);
            }
        }
        AngleVector { phi, p, d }
    }
}

/// `max |ηᵀη − I|`.
pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let d = g.nrows();
    crate::linalg::max_abs(&(g - DMatrix::<f64>::identity(d, d)))
}

/// Angles for an orthonormal frame (the `classical_to_angles` step).
pub fn frame_to_angles(beta: &DMatrix<f64>) -> Result<AngleVector> {
    Ok(BasisMatrix::new(beta.clone(), 1e-8)?.to_angles())
}

fn first_columns(p: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, d, |r, c| if r == c { 1.0 } else { 0.0 })
}

/// Left-multiply by the plane rotation in `(i, j)`.
fn rotate_rows(m: &mut DMatrix<f64>, i: usize, j: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    for col in 0..m.ncols() {
        let a = m[(i, col)];
        let b = m[(j, col)];
        m[(i, col)] = c * a - s * b;
        m[(j, col)] = s * a + c * b;
    }
}

/// Left-multiply by the derivative of the plane rotation: a matrix that is
/// zero outside rows `i, j` and holds `[[−sin, −cos], [cos, −sin]]` there.
fn differentiate_rows(m: &mut DMatrix<f64>, i: usize, j: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    for col in 0..m.ncols() {
        let a = m[(i, col)];
        let b = m[(j, col)];
        for r in 0..m.nrows() {
            m[(r, col)] = 0.0;
        }
        m[(i, col)] = -s * a - c * b;
        m[(j, col)] = c * a - s * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_angles(p: usize, d: usize, seed: u64) -> AngleVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (0..angle_count(p, d))
            .map(|_| rng.random_range(-4.0..7.0))
            .collect();
        AngleVector::new(phi, p, d).unwrap()
    }

    fn projector(m: &DMatrix<f64>) -> DMatrix<f64> {
        m * m.transpose()
    }

    /// Enumerate the planes with j varying first and count.
    fn enumeration_oracle(p: usize, d: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..p {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn index_forward_examples() {
        // planes (1,2), (1,5), (2,5) of a 1-based enumeration with p = 5
        assert_eq!(index_forward(0, 1, 5, 2).unwrap(), 0);
        assert_eq!(index_forward(0, 4, 5, 2).unwrap(), 3);
        assert_eq!(index_forward(1, 4, 5, 2).unwrap(), 6);
        let oracle = enumeration_oracle(5, 2);
        assert_eq!(oracle[0], (0, 1));
        assert_eq!(oracle[3], (0, 4));
        assert_eq!(oracle[6], (1, 4));
        assert!(index_forward(2, 3, 5, 2).is_err());
        assert!(index_forward(1, 1, 5, 2).is_err());
    }

    #[test]
    fn index_backward_examples() {
        assert_eq!(index_backward(0, 5, 2).unwrap(), (0, 1));
        assert_eq!(index_backward(6, 5, 2).unwrap(), (1, 4));
        assert!(index_backward(7, 5, 2).is_err());
    }

    #[test]
    fn index_maps_are_inverse_bijections() {
        for p in 1..9 {
            for d in 1..=p {
                let oracle = enumeration_oracle(p, d);
                assert_eq!(oracle.len(), angle_count(p, d));
                assert_eq!(planes(p, d), oracle);
                for (t, &(i, j)) in oracle.iter().enumerate() {
                    assert_eq!(index_forward(i, j, p, d).unwrap(), t);
                    assert_eq!(index_backward(t, p, d).unwrap(), (i, j));
                }
            }
        }
    }

    #[test]
    fn givens_examples() {
        assert_eq!(givens(4, 1, 3, 0.0).unwrap(), DMatrix::identity(4, 4));
        let g = givens(2, 0, 1, PI / 2.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(max_abs(&(g - expect)) < 1e-15);
        let g = givens(5, 1, 3, 1.234).unwrap();
        assert!(max_abs(&(g.transpose() * &g - DMatrix::identity(5, 5))) < 1e-14);
        assert!((g.determinant() - 1.0).abs() < 1e-14);
        assert!(givens(3, 2, 1, 0.1).is_err());
    }

    #[test]
    fn eta_examples() {
        let zero = AngleVector::zeros(5, 2).unwrap();
        assert_eq!(zero.eta().0, first_columns(5, 2));
        let quarter = AngleVector::new(vec![PI / 2.0], 2, 1).unwrap();
        let e = quarter.eta().0;
        assert!(e[(0, 0)].abs() < 1e-15 && (e[(1, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eta_matches_naive_full_product() {
        for (p, d, seed) in [(5, 2, 1), (4, 3, 2), (6, 1, 3), (3, 3, 4)] {
            let av = random_angles(p, d, seed);
            let mut full = DMatrix::identity(p, p);
            for (t, &(i, j)) in planes(p, d).iter().enumerate() {
                full *= givens(p, i, j, av.phi()[t]).unwrap();
            }
            let naive = full.columns(0, d).into_owned();
            assert!(max_abs(&(naive - av.eta().0)) < 1e-12);
        }
    }

    #[test]
    fn ignored_planes_leave_first_columns() {
        // the full product over all p(p-1)/2 planes has the same first d
        // columns as the product over the planes with i < d
        let (p, d) = (5, 2);
        let av = random_angles(p, d, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut full = DMatrix::identity(p, p);
        let restricted = planes(p, d);
        for i in 0..p {
            for j in i + 1..p {
                let angle = match restricted.iter().position(|&pl| pl == (i, j)) {
                    Some(t) => av.phi()[t],
                    None => rng.random_range(0.0..PI),
                };
                full *= givens(p, i, j, angle).unwrap();
            }
        }
        assert!(max_abs(&(full.columns(0, d).into_owned() - av.eta().0)) < 1e-12);
    }

    fn central_difference(av: &AngleVector, t: usize, h: f64) -> DMatrix<f64> {
        let mut plus = av.phi().to_vec();
        let mut minus = av.phi().to_vec();
        plus[t] += h;
        minus[t] -= h;
        (av.with_phi(plus).eta().0 - av.with_phi(minus).eta().0) / (2.0 * h)
    }

    #[test]
    fn eta_dot_examples() {
        let av = AngleVector::zeros(2, 1).unwrap();
        let dot = av.eta_dot(0).unwrap();
        assert!(max_abs(&(dot.clone() - central_difference(&av, 0, 1e-6))) < 1e-9);
        assert!(dot[(0, 0)].abs() < 1e-15 && (dot[(1, 0)] - 1.0).abs() < 1e-15);

        let av = random_angles(5, 2, 21);
        let fd = central_difference(&av, 3, 1e-6);
        assert!(max_abs(&(av.eta_dot(3).unwrap() - fd)) < 1e-6);
        assert!(av.eta_dot(7).is_err());
    }

    #[test]
    fn eta_dot_at_zero_touches_only_plane_rows() {
        let (p, d) = (5, 2);
        let av = AngleVector::zeros(p, d).unwrap();
        for (t, &(i, j)) in planes(p, d).iter().enumerate() {
            let dot = av.eta_dot(t).unwrap();
            for r in 0..p {
                if r != i && r != j {
                    assert_eq!(dot.row(r).amax(), 0.0);
                }
            }
        }
    }

    #[test]
    fn wrap_examples() {
        let w = AngleVector::new(vec![1.5 * PI], 2, 1).unwrap().wrap();
        assert!((w.phi()[0] - PI / 2.0).abs() < 1e-15);
        let w = AngleVector::new(vec![PI], 2, 1).unwrap().wrap();
        assert!(w.phi()[0].abs() < 1e-15);
        let inside = AngleVector::new(vec![0.3, 1.2, 3.0], 3, 2).unwrap();
        assert_eq!(inside.wrap(), inside);
    }

    #[test]
    fn wrap_preserves_columns_up_to_sign() {
        for seed in 0..50 {
            let av = random_angles(5, 2, 100 + seed);
            let w = av.wrap();
            assert!(w.phi().iter().all(|&a| (0.0..PI).contains(&a)));
            let (a, b) = (av.eta().0, w.eta().0);
            for c in 0..2 {
                let dot = a.column(c).dot(&b.column(c));
                assert!(
                    (dot.abs() - 1.0).abs() < 1e-12,
                    "seed {seed} col {c}: {dot}"
                );
            }
        }
    }

    #[test]
    fn plain_mod_pi_does_not_preserve_span() {
        // reducing each angle independently mod π changes the subspace
        let av = AngleVector::new(vec![0.4 + PI, 0.9], 3, 1).unwrap();
        let naive = av.with_phi(vec![0.4, 0.9]);
        let diff = projector(&av.eta().0) - projector(&naive.eta().0);
        assert!(max_abs(&diff) > 0.1);
        let wrapped = av.wrap();
        assert!((wrapped.phi()[1] - (PI - 0.9)).abs() < 1e-12);
        let diff = projector(&av.eta().0) - projector(&wrapped.eta().0);
        assert!(max_abs(&diff) < 1e-12);
    }

    #[test]
    fn frame_round_trip() {
        let e = first_columns(5, 2);
        let av = BasisMatrix::new(e, 1e-12).unwrap().to_angles();
        assert!(av.phi().iter().all(|&a| a == 0.0));

        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let av = frame_to_angles(&b).unwrap();
        assert!((av.phi()[0] - PI / 2.0).abs() < 1e-15);

        for seed in 0..30 {
            let av = random_angles(6, 3, 300 + seed);
            let frame = av.eta();
            let back = frame.to_angles();
            assert!(back.phi().iter().all(|&a| (0.0..PI).contains(&a)));
            let (a, b) = (frame.0, back.eta().0);
            for c in 0..3 {
                assert!((a.column(c).dot(&b.column(c)).abs() - 1.0).abs() < 1e-10);
            }
            // in-range angles are reproduced exactly
            let wrapped = av.wrap();
            let again = wrapped.eta().to_angles();
            for (x, y) in wrapped.phi().iter().zip(again.phi()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        let skew = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            frame_to_angles(&skew),
            Err(CssError::NotOrthonormal(_))
        ));
    }

    proptest! {
        #[test]
        fn frames_are_orthonormal(p in 1usize..=10, dfrac in 0.0f64..1.0, seed in any::<u64>()) {
            let d = 1 + ((p as f64 - 1.0) * dfrac) as usize;
            let av = random_angles(p, d, seed);
            prop_assert!(orthonormality_error(&av.eta().0) < 1e-10);
        }

        #[test]
        fn eta_dot_matches_differences(p in 2usize..=7, seed in any::<u64>()) {
            let d = 1 + (seed as usize) % (p - 1);
            let av = random_angles(p, d, seed);
            for t in 0..av.m() {
                let fd = central_difference(&av, t, 1e-6);
                let an = av.eta_dot(t).unwrap();
                let scale = max_abs(&an).max(1e-3);
                prop_assert!(max_abs(&(an - fd)) / scale < 1e-5);
            }
        }
    }
}
