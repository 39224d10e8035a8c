//! Operator views of a sparse matrix and the preconditioner adapters.
//!
//! The eigensolver never sees `A` itself — it iterates on one of two
//! symmetric views: the normal equations `C = AᵀA` (dimension `min(m, n)`)
//! or the augmented matrix `B = [0 Aᵀ; A 0]` (dimension `m + n`). Augmented
//! vectors are ordered `[v; u]`: the right-vector block of length `ncols`
//! first, then the left-vector block of length `nrows`.
//!
//! Preconditioners follow the same split. A factorization `M ≈ A` yields
//! `M⁻¹M⁻ᵀ` for `C` and `[0 M⁻¹; M⁻ᵀ 0]` for `B`; an approximation
//! `M_C ≈ C⁻¹` yields `[0 A·M_C; M_C·Aᵀ 0]` for `B`. There is no useful
//! adapter in the opposite direction — a preconditioner built for `B` has no
//! cheap square root to hand to `C` — so none is offered.

mod ilu;
mod shift_invert;

pub use ilu::{ilu0, Ilu0, IluError};
pub use shift_invert::{shift_invert_operator, ShiftInvertError, ShiftInvertMode, ShiftInvertOperator};

use crate::sparse::SparseMatrix;
use std::cell::Cell;

/// A real linear map with a known symmetry flag and a matvec price tag.
///
/// `matvec_cost` is the number of products with `A` one `apply` costs; the
/// solvers sum it to report comparable MV counts across the two views
/// (products with `A` and with `Aᵀ` always come in equal numbers, so a
/// single count describes both).
pub trait LinearOperator {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn is_symmetric(&self) -> bool;
    fn matvec_cost(&self) -> usize {
        1
    }

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim_out()];
        self.apply(x, &mut y);
        y
    }
}

/// Normal equations `C = AᵀA`, or `AAᵀ` when `A` is wide, so the operator
/// dimension is always `min(nrows, ncols)`. Symmetric positive
/// semi-definite; its eigenvalues are the squared singular values of `A`.
pub struct NormalEqOperator<'a> {
    a: &'a SparseMatrix,
    transposed: bool,
}

impl<'a> NormalEqOperator<'a> {
    pub fn new(a: &'a SparseMatrix) -> Self {
        NormalEqOperator { a, transposed: a.nrows() < a.ncols() }
    }
}

impl LinearOperator for NormalEqOperator<'_> {
    fn dim_in(&self) -> usize {
        self.a.nrows().min(self.a.ncols())
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.transposed {
            let mut mid = vec![0.0; self.a.ncols()];
            self.a.spmv_t(x, &mut mid);
            self.a.spmv(&mid, y);
        } else {
            let mut mid = vec![0.0; self.a.nrows()];
            self.a.spmv(x, &mut mid);
            self.a.spmv_t(&mid, y);
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Augmented matrix `B = [0 Aᵀ; A 0]` acting on `[v; u]`.
/// Symmetric indefinite; eigenvalues are `±σᵢ` plus `|nrows − ncols|` zeros.
pub struct AugmentedOperator<'a> {
    a: &'a SparseMatrix,
}

impl<'a> AugmentedOperator<'a> {
    pub fn new(a: &'a SparseMatrix) -> Self {
        AugmentedOperator { a }
    }
}

impl LinearOperator for AugmentedOperator<'_> {
    fn dim_in(&self) -> usize {
        self.a.nrows() + self.a.ncols()
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.a.ncols();
        let (v, u) = x.split_at(n);
        let (yv, yu) = y.split_at_mut(n);
        self.a.spmv_t(u, yv);
        self.a.spmv(v, yu);
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// A symmetric sparse matrix used directly as an operator (baselines, tests).
pub struct SymmetricCsrOperator<'a> {
    m: &'a SparseMatrix,
}

impl<'a> SymmetricCsrOperator<'a> {
    /// The caller asserts symmetry; only the shape is checked here.
    pub fn new(m: &'a SparseMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetric operator must be square");
        SymmetricCsrOperator { m }
    }
}

impl LinearOperator for SymmetricCsrOperator<'_> {
    fn dim_in(&self) -> usize {
        self.m.nrows()
    }

    fn dim_out(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.m.spmv(x, y);
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Decorator counting actual `apply` calls; tests use it to audit the MV
/// numbers the solvers report.
pub struct CountingOperator<'a> {
    inner: &'a dyn LinearOperator,
    applies: Cell<usize>,
}

impl<'a> CountingOperator<'a> {
    pub fn new(inner: &'a dyn LinearOperator) -> Self {
        CountingOperator { inner, applies: Cell::new(0) }
    }

    pub fn applies(&self) -> usize {
        self.applies.get()
    }

    /// Applies times the per-apply cost: directly comparable to reported MV.
    pub fn matvecs(&self) -> usize {
        self.applies.get() * self.inner.matvec_cost()
    }
}

impl LinearOperator for CountingOperator<'_> {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.applies.set(self.applies.get() + 1);
        self.inner.apply(x, y);
    }

    fn is_symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    fn matvec_cost(&self) -> usize {
        self.inner.matvec_cost()
    }
}

/// Which matrix a preconditioner is shaped for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondTarget {
    ForC,
    ForB,
}

/// An approximate inverse applied inside the correction step. Opaque on
/// purpose: everything the solver needs is `apply` plus the target tag, and
/// `description` keeps run reports readable.
pub struct Preconditioner<'a> {
    dim: usize,
    target: PrecondTarget,
    description: String,
    apply_fn: Box<dyn Fn(&[f64], &mut [f64]) + 'a>,
}

impl<'a> Preconditioner<'a> {
    pub fn new(
        dim: usize,
        target: PrecondTarget,
        description: impl Into<String>,
        apply_fn: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        Preconditioner { dim, target, description: description.into(), apply_fn: Box::new(apply_fn) }
    }

    pub fn identity(dim: usize, target: PrecondTarget) -> Self {
        Self::new(dim, target, "identity", |x, y| y.copy_from_slice(x))
    }

    /// `M⁻¹M⁻ᵀ` for the normal equations, from apply-closures for `M⁻¹` and
    /// `M⁻ᵀ` where `M ≈ A` (square).
    pub fn for_c_from_m(
        dim: usize,
        description: impl Into<String>,
        m_inv: impl Fn(&[f64], &mut [f64]) + 'a,
        m_inv_t: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        let desc = format!("{} as M⁻¹M⁻ᵀ", description.into());
        Self::new(dim, PrecondTarget::ForC, desc, move |x, y| {
            let mut mid = vec![0.0; x.len()];
            m_inv_t(x, &mut mid);
            m_inv(&mid, y);
        })
    }

    /// `[0 M⁻¹; M⁻ᵀ 0]` for the augmented matrix, from the same closures.
    /// `n` is the order of the (square) `M`; the operator dimension is `2n`.
    pub fn for_b_from_m(
        n: usize,
        description: impl Into<String>,
        m_inv: impl Fn(&[f64], &mut [f64]) + 'a,
        m_inv_t: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        let desc = format!("{} as [0 M⁻¹; M⁻ᵀ 0]", description.into());
        Self::new(2 * n, PrecondTarget::ForB, desc, move |x, y| {
            let (v, u) = x.split_at(n);
            let (yv, yu) = y.split_at_mut(n);
            m_inv(u, yv);
            m_inv_t(v, yu);
        })
    }

    /// Reuses a normal-equations preconditioner `M_C ≈ C⁻¹` on the augmented
    /// matrix as `[0 A·M_C; M_C·Aᵀ 0]`: `[v; u] ↦ [M_C(Aᵀu); A(M_C v)]`.
    /// Each apply costs two extra products with `A`.
    pub fn for_b_from_c_approx(
        a: &'a SparseMatrix,
        description: impl Into<String>,
        m_c: impl Fn(&[f64], &mut [f64]) + 'a,
    ) -> Self {
        let n = a.ncols();
        let m = a.nrows();
        let desc = format!("{} lifted as [0 A·M_C; M_C·Aᵀ 0]", description.into());
        Self::new(n + m, PrecondTarget::ForB, desc, move |x, y| {
            let (v, u) = x.split_at(n);
            let (yv, yu) = y.split_at_mut(n);
            let mut atu = vec![0.0; n];
            a.spmv_t(u, &mut atu);
            m_c(&atu, yv);
            let mut mcv = vec![0.0; n];
            m_c(v, &mut mcv);
            a.spmv(&mcv, yu);
        })
    }

    /// Diagonal (Jacobi) preconditioner for `C`: inverse squared column
    /// norms of `A`. Zero columns fall back to the identity row.
    pub fn jacobi_for_c(a: &SparseMatrix) -> Preconditioner<'static> {
        let inv: Vec<f64> = a
            .column_norms_squared()
            .iter()
            .map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 })
            .collect();
        Preconditioner::new(inv.len(), PrecondTarget::ForC, "jacobi (diag of AᵀA)", move |x, y| {
            for ((yi, xi), d) in y.iter_mut().zip(x).zip(&inv) {
                *yi = xi * d;
            }
        })
    }

    /// The Jacobi preconditioner lifted to the augmented matrix through
    /// [`Preconditioner::for_b_from_c_approx`].
    pub fn jacobi_for_b(a: &SparseMatrix) -> Preconditioner<'_> {
        let inv: Vec<f64> = a
            .column_norms_squared()
            .iter()
            .map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 })
            .collect();
        Preconditioner::for_b_from_c_approx(a, "jacobi (diag of AᵀA)", move |x, y| {
            for ((yi, xi), d) in y.iter_mut().zip(x).zip(&inv) {
                *yi = xi * d;
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target(&self) -> PrecondTarget {
        self.target
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        (self.apply_fn)(x, y);
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply(x, &mut y);
        y
    }
}
