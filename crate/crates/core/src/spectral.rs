//! Symmetric and generalized symmetric eigensolves, zero-eigenvalue gap
//! detection and per-layer nullspace bases.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, symmetrize, CVector};
use crate::mesh::LayerPartition;

/// Minimum accepted ratio between the first nonzero and the last zero
/// eigenvalue magnitude.
pub const GAP_THRESHOLD: f64 = 1e6;
const GAP_FLOOR: f64 = 1e-300;

/// Ascending eigenvalues with aligned eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        EigenDecomposition {
            values: order.iter().map(|&i| values[i]).collect(),
            vectors: DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]),
        }
    }

    /// Gap split of the eigenvalue magnitudes.
    pub fn gap(&self) -> Result<GapReport> {
        let mut mags: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        mags.sort_by(f64::total_cmp);
        detect_gap(&mags)
    }

    /// Indices of the zero block (the `k` smallest magnitudes).
    pub fn zero_block(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].abs().total_cmp(&self.values[b].abs()));
        let mut zero: Vec<usize> = order.into_iter().take(k).collect();
        zero.sort_unstable();
        zero
    }
}

/// Standard symmetric eigensolve, ascending.
pub fn symmetric_eig(s: &DMatrix<f64>) -> EigenDecomposition {
    let mut m = s.clone();
    symmetrize(&mut m);
    let eig = m.symmetric_eigen();
    EigenDecomposition::sorted(eig.eigenvalues, eig.eigenvectors)
}

/// Solve `S v = λ T v` with T symmetric positive definite.
///
/// Reduces to a standard problem through the Cholesky factor `T = L Lᵀ`;
/// returned vectors satisfy `VᵀTV = I`.
pub fn generalized_eig(s: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if s.shape() != t.shape() || s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!("S {:?} and T {:?}", s.shape(), t.shape())));
    }
    let n = s.nrows();
    let mut t_sym = t.clone();
    symmetrize(&mut t_sym);
    let chol = t_sym.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    // C = L⁻¹ S L⁻ᵀ
    let linv_s = l.solve_lower_triangular(s).ok_or(Error::NotPositiveDefinite)?;
    let c_t = l.solve_lower_triangular(&linv_s.transpose()).ok_or(Error::NotPositiveDefinite)?;
    let mut c = c_t.transpose();
    symmetrize(&mut c);
    let eig = c.symmetric_eigen();
    let v = l.transpose().solve_upper_triangular(&eig.eigenvectors).ok_or(Error::NotPositiveDefinite)?;
    debug_assert_eq!(v.nrows(), n);
    Ok(EigenDecomposition::sorted(eig.eigenvalues, v))
}

/// Location and size of the zero/nonzero eigenvalue gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub sorted_abs: Vec<f64>,
    /// Number of eigenvalues in the zero block.
    pub split: usize,
    pub ratio: f64,
}

/// Find the zero block in an ascending sequence of magnitudes.
///
/// Candidate split `k ≥ 1` scores `λ_k / max(λ_{k−1}, floor)`. The empty zero
/// block (`k = 0`) scores `λ_0` against the roundoff level `n·ε·λ_max`, and a
/// sequence that is entirely at roundoff level is all zero block.
pub fn detect_gap(sorted_abs: &[f64]) -> Result<GapReport> {
    if sorted_abs.is_empty() {
        return Err(Error::InvalidArgument("empty eigenvalue sequence".into()));
    }
    let n = sorted_abs.len();
    let max = sorted_abs[n - 1];
    let roundoff = (n as f64 * f64::EPSILON * max).max(GAP_FLOOR);
    if max <= GAP_FLOOR {
        return Ok(GapReport { sorted_abs: sorted_abs.to_vec(), split: n, ratio: f64::INFINITY });
    }
    let mut best = (0, sorted_abs[0] / roundoff);
    for k in 1..n {
        let ratio = sorted_abs[k] / sorted_abs[k - 1].max(GAP_FLOOR);
        if ratio > best.1 {
            best = (k, ratio);
        }
    }
    let report = GapReport { sorted_abs: sorted_abs.to_vec(), split: best.0, ratio: best.1 };
    if best.1 < GAP_THRESHOLD {
        return Err(Error::NoGap(Box::new(report)));
    }
    Ok(report)
}

/// Zero-eigenvalue eigenvectors of one standalone layer stiffness.
#[derive(Debug, Clone)]
pub struct NullspaceBasis {
    pub layer: usize,
    /// Standalone rows × k, orthonormal.
    pub standalone: DMatrix<f64>,
    pub k: usize,
    pub gap: GapReport,
    /// Full ascending spectrum of the standalone stiffness.
    pub eigenvalues: Vec<f64>,
}

impl NullspaceBasis {
    /// Zero-block and high-order eigenvalues, each ascending.
    pub fn eigen_split(&self) -> (Vec<f64>, Vec<f64>) {
        split_spectrum(&self.eigenvalues, self.k)
    }
}

fn split_spectrum(values: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let mut zero: Vec<f64> = idx[..k].iter().map(|&i| values[i]).collect();
    let mut high: Vec<f64> = idx[k..].iter().map(|&i| values[i]).collect();
    zero.sort_by(f64::total_cmp);
    high.sort_by(f64::total_cmp);
    (zero, high)
}

/// Nullspace of a standalone stiffness matrix via a real symmetric eigensolve.
///
/// When `expected` is given (gradient-count oracle), a differing detected
/// dimension is an error.
pub fn nullspace_of_standalone(s0: &DMatrix<f64>, layer: usize, expected: Option<usize>) -> Result<NullspaceBasis> {
    let dec = symmetric_eig(s0);
    if dec.values.is_empty() {
        let gap = GapReport { sorted_abs: Vec::new(), split: 0, ratio: f64::INFINITY };
        return Ok(NullspaceBasis { layer, standalone: DMatrix::zeros(0, 0), k: 0, gap, eigenvalues: Vec::new() });
    }
    let gap = dec.gap()?;
    let k = gap.split;
    if let Some(exp) = expected {
        if exp != k {
            return Err(Error::NullspaceMismatch { found: k, expected: exp });
        }
    }
    let cols = dec.zero_block(k);
    let standalone = DMatrix::from_fn(s0.nrows(), k, |r, c| dec.vectors[(r, cols[c])]);
    Ok(NullspaceBasis { layer, standalone, k, gap, eigenvalues: dec.values })
}

/// Relative singular-value threshold below which a restricted basis is
/// considered rank deficient.
pub const RESTRICT_RANK_TOL: f64 = 1e-10;

/// Keep the rows of the layer's owned unknowns and re-orthonormalize.
pub fn restrict_rows(basis: &NullspaceBasis, part: &LayerPartition) -> Result<DMatrix<f64>> {
    let layer = part
        .layers
        .get(basis.layer)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {} out of range", basis.layer)))?;
    if layer.standalone.len() != basis.standalone.nrows() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, standalone set has {}",
            basis.standalone.nrows(),
            layer.standalone.len()
        )));
    }
    let pos = layer.owned_positions();
    let rows = DMatrix::from_fn(pos.len(), basis.k, |r, c| basis.standalone[(pos[r], c)]);
    let (q, _) = orthonormal_basis(&rows, RESTRICT_RANK_TOL);
    if q.ncols() != basis.k {
        return Err(Error::RankDrop { layer: basis.layer, expected: basis.k, rank: q.ncols() });
    }
    Ok(q)
}

/// Relative distance from resonance below which the modal solve refuses.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Modal expansion `x = V (Λ − ω²I)⁻¹ Vᵀ b` for a lossless system.
///
/// The zero block found by the gap split is taken as exactly zero. At ω = 0
/// its contribution is dropped, which yields the solution T-orthogonal to
/// the nullspace when b lies in the range of S.
pub fn modal_solution(dec: &EigenDecomposition, b: &CVector, omega: f64) -> Result<CVector> {
    let n = dec.vectors.nrows();
    if b.len() != n {
        return Err(Error::Dimension(format!("rhs length {} for order {n}", b.len())));
    }
    let k = dec.gap().map(|g| g.split).unwrap_or(0);
    let zero = dec.zero_block(k);
    let mut is_zero = vec![false; dec.values.len()];
    for i in zero {
        is_zero[i] = true;
    }
    let w2 = omega * omega;
    let mut x = CVector::zeros(n);
    for (i, &lam) in dec.values.iter().enumerate() {
        let lam = if is_zero[i] { 0.0 } else { lam };
        let denom = lam - w2;
        if is_zero[i] && omega == 0.0 {
            continue;
        }
        if denom.abs() <= RESONANCE_TOL * lam.abs().max(w2) {
            return Err(Error::Resonance(lam));
        }
        let v = dec.vectors.column(i);
        let y: Complex64 = v.iter().zip(b.iter()).map(|(vi, bi)| bi * *vi).sum();
        let coef = y / denom;
        for (xr, vr) in x.iter_mut().zip(v.iter()) {
            *xr += coef * *vr;
        }
    }
    Ok(x)
}

/// Table-1 style CSV: `index,DC,High order`, rows aligned by index.
pub fn write_eigentable<W: Write>(out: &mut W, zero: &[f64], high: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,DC,High order")?;
    let rows = zero.len().max(high.len());
    let cell = |v: Option<&f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in 0..rows {
        writeln!(out, "{},{},{}", r + 1, cell(zero.get(r)), cell(high.get(r)))?;
    }
    Ok(())
}

/// Split an arbitrary spectrum into (zero block, high order) using the gap.
pub fn split_by_gap(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let gap = detect_gap(&mags)?;
    Ok(split_spectrum(values, gap.split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_rules() {
        assert_eq!(detect_gap(&[1.0, 2.0, 3.0]).unwrap().split, 0);
        assert_eq!(detect_gap(&[1e-18, 1e-17, 1.0]).unwrap().split, 2);
        assert_eq!(detect_gap(&[1e-3, 1e-2, 1e-1, 1.0]).unwrap().split, 0);
        assert!(matches!(detect_gap(&[1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0]), Err(Error::NoGap(_))));
        assert_eq!(detect_gap(&[0.0, 0.0]).unwrap().split, 2);
        assert!(detect_gap(&[]).is_err());
    }

    #[test]
    fn identity_pencil() {
        let i = DMatrix::<f64>::identity(3, 3);
        let dec = generalized_eig(&i, &i).unwrap();
        assert!(dec.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let vtv = dec.vectors.transpose() * &dec.vectors;
        assert!((vtv - &i).abs().max() < 1e-14);
        let ns = nullspace_of_standalone(&i, 0, Some(0)).unwrap();
        assert_eq!(ns.k, 0);
    }

    #[test]
    fn indefinite_mass_rejected() {
        let s = DMatrix::<f64>::identity(2, 2);
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(generalized_eig(&s, &t), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn mismatch_with_oracle_is_error() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 2.0]));
        assert!(matches!(
            nullspace_of_standalone(&s, 0, Some(2)),
            Err(Error::NullspaceMismatch { found: 1, expected: 2 })
        ));
    }

    #[test]
    fn modal_zero_rhs() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 4.0]));
        let dec = generalized_eig(&s, &DMatrix::identity(3, 3)).unwrap();
        let x = modal_solution(&dec, &CVector::zeros(3), 0.5).unwrap();
        assert!(x.iter().all(|z| z.norm() == 0.0));
        let b = CVector::from_element(3, Complex64::new(1.0, 0.0));
        assert!(matches!(modal_solution(&dec, &b, 1.0), Err(Error::Resonance(_))));
    }

    #[test]
    fn eigentable_layout() {
        let mut buf = Vec::new();
        write_eigentable(&mut buf, &[], &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,DC,High order\n");
        let mut buf = Vec::new();
        write_eigentable(&mut buf, &[1e-20], &[1.0, 2.0]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[1], "1,9.9999999999999995e-21,1.0000000000000000e0");
        assert_eq!(lines[2], "2,,2.0000000000000000e0");
    }
}
