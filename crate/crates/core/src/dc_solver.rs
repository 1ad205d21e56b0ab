//! Reference and DC-subspace solution paths.
//!
//! * [`solve_direct`]: LU of the full system.
//! * [`solve_dc_projected`]: Galerkin projection onto the block-diagonal DC
//!   basis, one dense reduced solve.
//! * [`solve_dc_layered`]: the same reduced system solved by a block
//!   tridiagonal sweep, one layer at a time.
//! * [`solve_dc_schur2`]: exact elimination of region 1 followed by
//!   projection of the region-2 Schur complement.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{complexify, refine, AccurateComplex, AccurateOperator, CMatrix, CVector, ComplexLu};

/// Maximum refinement sweeps for the reduced solves.
const REFINE_STEPS: usize = 10;

/// Block-diagonal DC basis: one orthonormal block per layer, placed on the
/// rows the layer owns.
#[derive(Debug, Clone)]
pub struct GlobalNullspace {
    pub n: usize,
    pub blocks: Vec<DMatrix<f64>>,
    pub rows: Vec<Vec<usize>>,
    pub col_offsets: Vec<usize>,
}

impl GlobalNullspace {
    pub fn cols(&self) -> usize {
        *self.col_offsets.last().unwrap_or(&0)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.n, self.cols());
        for (b, (blk, rows)) in self.blocks.iter().zip(&self.rows).enumerate() {
            let c0 = self.col_offsets[b];
            for (r, &row) in rows.iter().enumerate() {
                for c in 0..blk.ncols() {
                    v[(row, c0 + c)] = blk[(r, c)];
                }
            }
        }
        v
    }

    /// `x = V₀ y`.
    pub fn expand(&self, y: &CVector) -> CVector {
        let mut x = CVector::zeros(self.n);
        for (b, (blk, rows)) in self.blocks.iter().zip(&self.rows).enumerate() {
            let c0 = self.col_offsets[b];
            for (r, &row) in rows.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..blk.ncols() {
                    acc += y[c0 + c] * blk[(r, c)];
                }
                x[row] = acc;
            }
        }
        x
    }
}

/// Assemble the block-diagonal basis from per-layer restricted blocks.
pub fn build_global_v0(blocks: Vec<DMatrix<f64>>, rows: Vec<Vec<usize>>, n: usize) -> Result<GlobalNullspace> {
    if blocks.len() != rows.len() {
        return Err(Error::Dimension(format!("{} blocks for {} row sets", blocks.len(), rows.len())));
    }
    let mut seen = vec![false; n];
    let mut col_offsets = vec![0];
    for (blk, r) in blocks.iter().zip(&rows) {
        if blk.nrows() != r.len() {
            return Err(Error::Dimension(format!("block with {} rows for {} indices", blk.nrows(), r.len())));
        }
        for &i in r {
            if i >= n {
                return Err(Error::Dimension(format!("row {i} out of range {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("row {i} appears in two layers")));
            }
        }
        col_offsets.push(col_offsets.last().unwrap() + blk.ncols());
    }
    Ok(GlobalNullspace { n, blocks, rows, col_offsets })
}

fn submatrix(a: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn subvector(b: &CVector, rows: &[usize]) -> CVector {
    CVector::from_fn(rows.len(), |i, _| b[rows[i]])
}

/// `Vᵢᵀ Aᵢⱼ Vⱼ` with compensated accumulation in both products.
fn project_block(a: &CMatrix, vi: &DMatrix<f64>, vj: &DMatrix<f64>) -> CMatrix {
    let av = CMatrix::from_fn(a.nrows(), vj.ncols(), |r, c| {
        let mut acc = AccurateComplex::default();
        for k in 0..a.ncols() {
            acc.add_product(a[(r, k)], Complex64::new(vj[(k, c)], 0.0));
        }
        acc.value()
    });
    CMatrix::from_fn(vi.ncols(), vj.ncols(), |r, c| {
        let mut acc = AccurateComplex::default();
        for k in 0..vi.nrows() {
            acc.add_real_product(vi[(k, r)], av[(k, c)]);
        }
        acc.value()
    })
}

fn project_vector(v: &DMatrix<f64>, b: &CVector) -> CVector {
    CVector::from_fn(v.ncols(), |c, _| {
        let mut acc = AccurateComplex::default();
        for k in 0..v.nrows() {
            acc.add_real_product(v[(k, c)], b[k]);
        }
        acc.value()
    })
}

/// Projected system `V₀ᵀ A V₀ y = V₀ᵀ b` in block form.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// `blocks[i][j] = Vᵢᵀ Aᵢⱼ Vⱼ` for every pair of layers.
    pub blocks: Vec<Vec<CMatrix>>,
    pub rhs: Vec<CVector>,
}

impl ReducedSystem {
    pub fn build(a: &CMatrix, v0: &GlobalNullspace, b: &CVector) -> Result<Self> {
        if a.nrows() != v0.n || a.ncols() != v0.n || b.len() != v0.n {
            return Err(Error::Dimension(format!("system order {} vs basis rows {}", a.nrows(), v0.n)));
        }
        let m = v0.blocks.len();
        let mut blocks = Vec::with_capacity(m);
        for i in 0..m {
            let row: Vec<CMatrix> = (0..m)
                .map(|j| {
                    let aij = submatrix(a, &v0.rows[i], &v0.rows[j]);
                    project_block(&aij, &v0.blocks[i], &v0.blocks[j])
                })
                .collect();
            blocks.push(row);
        }
        let rhs = (0..m).map(|i| project_vector(&v0.blocks[i], &subvector(b, &v0.rows[i]))).collect();
        Ok(ReducedSystem { blocks, rhs })
    }

    pub fn layers(&self) -> usize {
        self.blocks.len()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for row in &self.blocks {
            off.push(off.last().unwrap() + row[0].nrows());
        }
        off
    }

    pub fn order(&self) -> usize {
        *self.offsets().last().unwrap()
    }

    /// True when every block with |i−j| > 1 is exactly zero.
    pub fn is_block_tridiagonal(&self) -> bool {
        let m = self.layers();
        (0..m).all(|i| (0..m).all(|j| i.abs_diff(j) <= 1 || self.blocks[i][j].iter().all(|z| z.re == 0.0 && z.im == 0.0)))
    }

    pub fn dense(&self) -> CMatrix {
        let off = self.offsets();
        let n = *off.last().unwrap();
        let mut out = CMatrix::zeros(n, n);
        for (i, row) in self.blocks.iter().enumerate() {
            for (j, blk) in row.iter().enumerate() {
                out.view_mut((off[i], off[j]), blk.shape()).copy_from(blk);
            }
        }
        out
    }

    pub fn dense_rhs(&self) -> CVector {
        let off = self.offsets();
        let mut g = CVector::zeros(*off.last().unwrap());
        for (i, r) in self.rhs.iter().enumerate() {
            g.rows_mut(off[i], r.len()).copy_from(r);
        }
        g
    }
}

/// Block-tridiagonal view of a reduced system, used as an operator for
/// refinement of the layered sweep.
struct TridiagonalOperator<'a> {
    sys: &'a ReducedSystem,
    offsets: Vec<usize>,
}

impl AccurateOperator for TridiagonalOperator<'_> {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn residual(&self, y: &CVector, g: &CVector) -> CVector {
        let m = self.sys.layers();
        let mut r = CVector::zeros(self.dim());
        for i in 0..m {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(m - 1);
            let bi = &self.sys.blocks[i];
            for row in 0..bi[i].nrows() {
                let mut acc = AccurateComplex::default();
                acc.add(g[self.offsets[i] + row]);
                for (j, blk) in bi.iter().enumerate().take(hi + 1).skip(lo) {
                    for col in 0..blk.ncols() {
                        acc.add_product(-blk[(row, col)], y[self.offsets[j] + col]);
                    }
                }
                r[self.offsets[i] + row] = acc.value();
            }
        }
        r
    }
}

/// Factorized block-tridiagonal sweep. Every factorization has the order of
/// one layer's DC basis.
struct BlockSweep {
    /// Factorizations of the eliminated diagonal blocks.
    pivots: Vec<ComplexLu>,
    /// `D̃ᵢ⁻¹ Bᵢ,ᵢ₊₁`
    upper_solved: Vec<CMatrix>,
    lower: Vec<CMatrix>,
    flops: f64,
}

impl BlockSweep {
    fn factor(sys: &ReducedSystem) -> Result<Self> {
        let m = sys.layers();
        let mut pivots = Vec::with_capacity(m);
        let mut upper_solved = Vec::with_capacity(m.saturating_sub(1));
        let mut lower = Vec::with_capacity(m.saturating_sub(1));
        let mut flops = 0.0;
        let mut diag = sys.blocks[0][0].clone();
        for i in 0..m {
            let k = diag.nrows() as f64;
            let lu = ComplexLu::new(&diag).map_err(|_| Error::SingularBlock(i))?;
            flops += 2.0 / 3.0 * k * k * k;
            if i + 1 < m {
                let up = &sys.blocks[i][i + 1];
                let lo = &sys.blocks[i + 1][i];
                let solved = lu.solve_matrix(up);
                let kn = up.ncols() as f64;
                flops += 2.0 * k * k * kn + 2.0 * kn * k * kn;
                diag = &sys.blocks[i + 1][i + 1] - lo * &solved;
                upper_solved.push(solved);
                lower.push(lo.clone());
            }
            pivots.push(lu);
        }
        Ok(BlockSweep { pivots, upper_solved, lower, flops })
    }

    fn solve(&self, g: &CVector, offsets: &[usize]) -> CVector {
        let m = self.pivots.len();
        let seg = |v: &CVector, i: usize| v.rows(offsets[i], offsets[i + 1] - offsets[i]).into_owned();
        // forward: gᵢ₊₁ ← gᵢ₊₁ − Bᵢ₊₁,ᵢ D̃ᵢ⁻¹ gᵢ
        let mut z: Vec<CVector> = Vec::with_capacity(m);
        let mut carry = seg(g, 0);
        for i in 0..m {
            let zi = self.pivots[i].solve(&carry);
            if i + 1 < m {
                carry = seg(g, i + 1) - &self.lower[i] * &zi;
            }
            z.push(zi);
        }
        // back: yᵢ = zᵢ − D̃ᵢ⁻¹ Bᵢ,ᵢ₊₁ yᵢ₊₁
        let mut y = vec![CVector::zeros(0); m];
        y[m - 1] = z[m - 1].clone();
        for i in (0..m - 1).rev() {
            y[i] = &z[i] - &self.upper_solved[i] * &y[i + 1];
        }
        let mut out = CVector::zeros(*offsets.last().unwrap());
        for (i, yi) in y.iter().enumerate() {
            out.rows_mut(offsets[i], yi.len()).copy_from(yi);
        }
        out
    }
}

/// Which solution path produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Direct,
    Modal,
    DcProjected,
    DcLayered,
    Schur2,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Modal => "modal",
            Method::DcProjected => "dc-projected",
            Method::DcLayered => "dc-layered",
            Method::Schur2 => "schur2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Direct, Method::Modal, Method::DcProjected, Method::DcLayered, Method::Schur2]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// Solution vector with provenance and diagnostics.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub x: CVector,
    /// (reference method, relative error) pairs.
    pub errors: Vec<(Method, f64)>,
    pub timings: Vec<(&'static str, Duration)>,
    /// Estimated floating-point operations spent in factorizations.
    pub factor_flops: f64,
    /// Orders of the reduced diagonal blocks (DC paths only).
    pub block_orders: Vec<usize>,
}

impl SolveReport {
    pub fn new(method: Method, x: CVector) -> Self {
        SolveReport { method, x, errors: Vec::new(), timings: Vec::new(), factor_flops: 0.0, block_orders: Vec::new() }
    }

    pub fn compare(&mut self, reference: &SolveReport) -> Result<f64> {
        let e = crate::linalg::relative_error(&self.x, &reference.x)?;
        self.errors.retain(|(m, _)| *m != reference.method);
        self.errors.push((reference.method, e));
        Ok(e)
    }

    pub fn error_vs(&self, m: Method) -> Option<f64> {
        self.errors.iter().find(|(r, _)| *r == m).map(|(_, e)| *e)
    }
}

fn check_square(a: &CMatrix, b: &CVector) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Dimension(format!("matrix {:?} with rhs {}", a.shape(), b.len())));
    }
    Ok(())
}

/// LU with partial pivoting of the full system, refined against `op` (the
/// accurate action of the same operator; pass `a` itself when no split form
/// is available).
pub fn solve_direct(a: &CMatrix, b: &CVector, op: Option<&dyn AccurateOperator>) -> Result<SolveReport> {
    check_square(a, b)?;
    let t0 = Instant::now();
    let lu = ComplexLu::new(a)?;
    let t_factor = t0.elapsed();
    let mut x = lu.solve(b);
    refine(op.unwrap_or(a), b, &mut x, |r| lu.solve(r), REFINE_STEPS);
    let n = a.nrows() as f64;
    let mut rep = SolveReport::new(Method::Direct, x);
    rep.factor_flops = 2.0 / 3.0 * n * n * n;
    rep.timings = vec![("factor", t_factor), ("total", t0.elapsed())];
    Ok(rep)
}

/// `x = V₀ (V₀ᵀAV₀)⁻¹ V₀ᵀ b` with one dense factorization of the reduced
/// matrix.
pub fn solve_dc_projected(a: &CMatrix, v0: &GlobalNullspace, b: &CVector) -> Result<SolveReport> {
    check_square(a, b)?;
    let t0 = Instant::now();
    let sys = ReducedSystem::build(a, v0, b)?;
    let t_build = t0.elapsed();
    let mut rep = solve_reduced_dense(&sys, v0)?;
    rep.timings.insert(0, ("project", t_build));
    rep.timings.push(("total", t0.elapsed()));
    Ok(rep)
}

/// Dense solve of an already projected system.
pub fn solve_reduced_dense(sys: &ReducedSystem, v0: &GlobalNullspace) -> Result<SolveReport> {
    let t0 = Instant::now();
    let bd = sys.dense();
    let g = sys.dense_rhs();
    let lu = ComplexLu::new(&bd)?;
    let mut y = lu.solve(&g);
    refine(&bd, &g, &mut y, |r| lu.solve(r), REFINE_STEPS);
    let k = bd.nrows() as f64;
    let mut rep = SolveReport::new(Method::DcProjected, v0.expand(&y));
    rep.factor_flops = 2.0 / 3.0 * k * k * k;
    rep.block_orders = vec![bd.nrows()];
    rep.timings = vec![("reduced-solve", t0.elapsed())];
    Ok(rep)
}

/// Layer-by-layer block elimination of the projected system.
pub fn solve_dc_layered(a: &CMatrix, v0: &GlobalNullspace, b: &CVector) -> Result<SolveReport> {
    check_square(a, b)?;
    let t0 = Instant::now();
    let sys = ReducedSystem::build(a, v0, b)?;
    let t_build = t0.elapsed();
    let mut rep = solve_reduced_layered(&sys, v0)?;
    rep.timings.insert(0, ("project", t_build));
    rep.timings.push(("total", t0.elapsed()));
    Ok(rep)
}

/// Block-tridiagonal sweep over an already projected system.
pub fn solve_reduced_layered(sys: &ReducedSystem, v0: &GlobalNullspace) -> Result<SolveReport> {
    if !sys.is_block_tridiagonal() {
        return Err(Error::InvalidArgument("reduced system couples non-adjacent layers".into()));
    }
    let t0 = Instant::now();
    let sweep = BlockSweep::factor(sys)?;
    let offsets = sys.offsets();
    let g = sys.dense_rhs();
    let mut y = sweep.solve(&g, &offsets);
    let op = TridiagonalOperator { sys, offsets: offsets.clone() };
    refine(&op, &g, &mut y, |r| sweep.solve(r, &offsets), REFINE_STEPS);
    let mut rep = SolveReport::new(Method::DcLayered, v0.expand(&y));
    rep.factor_flops = sweep.flops;
    rep.block_orders = sys.blocks.iter().enumerate().map(|(i, r)| r[i].nrows()).collect();
    rep.timings = vec![("sweep", t0.elapsed())];
    Ok(rep)
}

/// Literal two-region path: eliminate region 1 exactly, then project the
/// region-2 Schur complement onto `v02`.
///
/// Returns the region-2 field `x₂` (rows in `region2` order).
pub fn solve_dc_schur2(
    a: &CMatrix,
    region1: &[usize],
    region2: &[usize],
    v02: &DMatrix<f64>,
    b: &CVector,
) -> Result<CVector> {
    check_square(a, b)?;
    if v02.nrows() != region2.len() {
        return Err(Error::Dimension(format!("V₀,₂ has {} rows for {} unknowns", v02.nrows(), region2.len())));
    }
    let a11 = submatrix(a, region1, region1);
    let a12 = submatrix(a, region1, region2);
    let a21 = submatrix(a, region2, region1);
    let a22 = submatrix(a, region2, region2);
    let b1 = subvector(b, region1);
    let b2 = subvector(b, region2);
    let lu11 = ComplexLu::new(&a11)?;
    // Ã₂₂ = A₂₂ − A₂₁ A₁₁⁻¹ A₁₂ ; b₂′ = b₂ − A₂₁ A₁₁⁻¹ b₁
    let mut a11_inv_a12 = lu11.solve_matrix(&a12);
    for c in 0..a12.ncols() {
        let col = a12.column(c).into_owned();
        let mut xc = a11_inv_a12.column(c).into_owned();
        refine(&a11, &col, &mut xc, |r| lu11.solve(r), REFINE_STEPS);
        a11_inv_a12.set_column(c, &xc);
    }
    let mut a11_inv_b1 = lu11.solve(&b1);
    refine(&a11, &b1, &mut a11_inv_b1, |r| lu11.solve(r), REFINE_STEPS);
    let schur = &a22 - &a21 * &a11_inv_a12;
    let b2p = &b2 - &a21 * &a11_inv_b1;
    let reduced = project_block(&schur, v02, v02);
    let g = project_vector(v02, &b2p);
    let lu = ComplexLu::new(&reduced)?;
    let mut y = lu.solve(&g);
    refine(&reduced, &g, &mut y, |r| lu.solve(r), REFINE_STEPS);
    Ok(complexify(v02) * y)
}

/// [`solve_dc_schur2`] plus back substitution `x₁ = A₁₁⁻¹(b₁ − A₁₂x₂)`,
/// returning the full field.
pub fn solve_dc_schur2_full(
    a: &CMatrix,
    region1: &[usize],
    region2: &[usize],
    v02: &DMatrix<f64>,
    b: &CVector,
) -> Result<SolveReport> {
    let t0 = Instant::now();
    let x2 = solve_dc_schur2(a, region1, region2, v02, b)?;
    let a11 = submatrix(a, region1, region1);
    let a12 = submatrix(a, region1, region2);
    let rhs1 = subvector(b, region1) - &a12 * &x2;
    let lu11 = ComplexLu::new(&a11)?;
    let mut x1 = lu11.solve(&rhs1);
    refine(&a11, &rhs1, &mut x1, |r| lu11.solve(r), REFINE_STEPS);
    let mut x = CVector::zeros(a.nrows());
    for (i, &r) in region1.iter().enumerate() {
        x[r] = x1[i];
    }
    for (i, &r) in region2.iter().enumerate() {
        x[r] = x2[i];
    }
    let (n1, k2) = (region1.len() as f64, v02.ncols() as f64);
    let mut rep = SolveReport::new(Method::Schur2, x);
    rep.factor_flops = 2.0 / 3.0 * n1 * n1 * n1 + 2.0 / 3.0 * k2 * k2 * k2;
    rep.block_orders = vec![region1.len(), v02.ncols()];
    rep.timings = vec![("total", t0.elapsed())];
    Ok(rep)
}
