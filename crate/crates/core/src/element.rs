//! Lowest-order edge element on an axis-aligned brick.
//!
//! Basis functions are normalized to a unit line integral along their own
//! edge, so an edge coefficient is the voltage drop of E along that edge.
//! Every basis component and every curl component factors into a product of
//! 1D polynomials in the local coordinates `(u, v, w) ∈ [0,1]³`, which makes
//! all element integrals exact tensor products of 1D integrals.

use nalgebra::SMatrix;

use crate::constants::{EPS0, MU0};
use crate::error::{Error, Result};
use crate::mesh::{Material, LOCAL_EDGES};

pub type ElementMatrix = SMatrix<f64, LOCAL_EDGES, LOCAL_EDGES>;

/// 1D factor of a separable polynomial on [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    One,
    /// `1 - t` for side 0, `t` for side 1.
    Hat(u8),
    /// Derivative of the hat: -1 for side 0, +1 for side 1.
    Slope(u8),
}

impl Factor {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Factor::One => 1.0,
            Factor::Hat(0) => 1.0 - t,
            Factor::Hat(_) => t,
            Factor::Slope(s) => sign(s),
        }
    }
}

fn sign(side: u8) -> f64 {
    if side == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Exact ∫₀¹ f g dt.
fn integral(f: Factor, g: Factor) -> f64 {
    use Factor::*;
    match (f, g) {
        (One, One) => 1.0,
        (One, Hat(_)) | (Hat(_), One) => 0.5,
        (One, Slope(s)) | (Slope(s), One) => sign(s),
        (Hat(s), Hat(t)) => {
            if s == t {
                1.0 / 3.0
            } else {
                1.0 / 6.0
            }
        }
        (Hat(_), Slope(t)) | (Slope(t), Hat(_)) => 0.5 * sign(t),
        (Slope(s), Slope(t)) => sign(s) * sign(t),
    }
}

/// `coef * fu(u) fv(v) fw(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub factors: [Factor; 3],
}

impl Term {
    const ZERO: Term = Term { coef: 0.0, factors: [Factor::One; 3] };

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.coef * self.factors[0].eval(p[0]) * self.factors[1].eval(p[1]) * self.factors[2].eval(p[2])
    }
}

/// Integral over the reference cube of the product of two terms.
fn product_integral(a: &Term, b: &Term) -> f64 {
    if a.coef == 0.0 || b.coef == 0.0 {
        return 0.0;
    }
    a.coef * b.coef * (0..3).map(|k| integral(a.factors[k], b.factors[k])).product::<f64>()
}

/// Vector field as three separable components.
pub type VectorTerm = [Term; 3];

/// Side pairs in local edge order.
const SIDES: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Basis function of local edge `e` on a brick of size `dims`.
pub fn basis(e: usize, dims: [f64; 3]) -> VectorTerm {
    let [a, b, c] = dims;
    let (p, q) = SIDES[e % 4];
    let mut out = [Term::ZERO; 3];
    match e / 4 {
        0 => out[0] = Term { coef: 1.0 / a, factors: [Factor::One, Factor::Hat(p), Factor::Hat(q)] },
        1 => out[1] = Term { coef: 1.0 / b, factors: [Factor::Hat(p), Factor::One, Factor::Hat(q)] },
        _ => out[2] = Term { coef: 1.0 / c, factors: [Factor::Hat(p), Factor::Hat(q), Factor::One] },
    }
    out
}

/// Curl of the basis function of local edge `e`.
pub fn curl(e: usize, dims: [f64; 3]) -> VectorTerm {
    let [a, b, c] = dims;
    let (p, q) = SIDES[e % 4];
    let mut out = [Term::ZERO; 3];
    match e / 4 {
        // N = (1/a) h_p(v) h_q(w) x̂ ; curl = (0, ∂z Nx, −∂y Nx)
        0 => {
            out[1] = Term { coef: 1.0 / (a * c), factors: [Factor::One, Factor::Hat(p), Factor::Slope(q)] };
            out[2] = Term { coef: -1.0 / (a * b), factors: [Factor::One, Factor::Slope(p), Factor::Hat(q)] };
        }
        // N = (1/b) h_p(u) h_q(w) ŷ ; curl = (−∂z Ny, 0, ∂x Ny)
        1 => {
            out[0] = Term { coef: -1.0 / (b * c), factors: [Factor::Hat(p), Factor::One, Factor::Slope(q)] };
            out[2] = Term { coef: 1.0 / (a * b), factors: [Factor::Slope(p), Factor::One, Factor::Hat(q)] };
        }
        // N = (1/c) h_p(u) h_q(v) ẑ ; curl = (∂y Nz, −∂x Nz, 0)
        _ => {
            out[0] = Term { coef: 1.0 / (b * c), factors: [Factor::Hat(p), Factor::Slope(q), Factor::One] };
            out[1] = Term { coef: -1.0 / (a * c), factors: [Factor::Slope(p), Factor::Hat(q), Factor::One] };
        }
    }
    out
}

fn gram(dims: [f64; 3], field: fn(usize, [f64; 3]) -> VectorTerm) -> ElementMatrix {
    let vol = dims[0] * dims[1] * dims[2];
    let fields: Vec<VectorTerm> = (0..LOCAL_EDGES).map(|e| field(e, dims)).collect();
    let mut m = ElementMatrix::zeros();
    for i in 0..LOCAL_EDGES {
        for j in i..LOCAL_EDGES {
            let v = vol * (0..3).map(|k| product_integral(&fields[i][k], &fields[j][k])).sum::<f64>();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Unit-weight curl-curl matrix ∫ ∇×Nᵢ · ∇×Nⱼ dV.
pub fn curl_gram(dims: [f64; 3]) -> ElementMatrix {
    gram(dims, curl)
}

/// Unit-weight mass matrix ∫ Nᵢ · Nⱼ dV.
pub fn mass_gram(dims: [f64; 3]) -> ElementMatrix {
    gram(dims, basis)
}

/// Stiffness, mass and loss matrices of one brick.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    /// μr⁻¹ ∫ ∇×Nᵢ·∇×Nⱼ
    pub stiffness: ElementMatrix,
    /// μ0 ε0 εr ∫ Nᵢ·Nⱼ
    pub mass: ElementMatrix,
    /// μ0 σ ∫ Nᵢ·Nⱼ
    pub loss: ElementMatrix,
}

pub fn local_matrices(dims: [f64; 3], material: &Material) -> Result<ElementMatrices> {
    if dims.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidElement(format!("cell dimensions {dims:?}")));
    }
    material.validate()?;
    let m = mass_gram(dims);
    Ok(ElementMatrices {
        stiffness: curl_gram(dims) / material.mu_r,
        mass: m * (MU0 * EPS0 * material.eps_r),
        loss: m * (MU0 * material.sigma),
    })
}
