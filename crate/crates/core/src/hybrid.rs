//! Partial linearization: choosing which machines stay nonlinear and
//! assembling the hybrid models that mix exact and linearized equations.
//!
//! Machines are ranked by the column norms of the source-to-machine block of
//! the reduced admittance matrix; a machine electrically close to the
//! boundary has a large norm and keeps its nonlinear equations. The
//! remaining machines are replaced by rows of the linearized model.
//!
//! Row bookkeeping: a machine kept nonlinear contributes all nine of its
//! rows to the exact part; rows of linearized machines are affine. The
//! reported count `q` follows the convention of counting only the four
//! genuinely nonlinear rows per kept machine, since the first five rows of a
//! machine are linear either way.

use crate::dynamics::{
    machine_currents_into, machine_rhs_into, state_index::*, BoundaryInput, DynModel,
};
use crate::error::{Error, Result};
use crate::linearize::LinearModel;
use crate::mor::BalancedReduction;
use crate::netmodel::GenId;
use crate::scalar::Float;
use crate::sparse::SparseRows;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use std::collections::BTreeSet;

/// Default voltage base in kV for converting admittance thresholds given in
/// siemens.
pub const DEFAULT_V_BASE_KV: f64 = 20.0;

/// Euclidean norm of each column of the source-to-machine admittance block.
/// Column `i` measures how strongly machine `i` couples to the boundary.
pub fn column_norms<T: Float>(y21: &DMatrix<Complex<T>>) -> DVector<T> {
    let mut norms = DVector::zeros(y21.ncols());
    for i in 0..y21.ncols() {
        let mut acc = T::zero();
        for r in 0..y21.nrows() {
            acc += y21[(r, i)].norm_sqr();
        }
        norms[i] = acc.sqrt();
    }
    norms
}

/// Converts an admittance from siemens to per unit:
/// `y_pu = y_S * v_base_kv^2 / s_base_mva`.
pub fn threshold_to_pu<T: Float>(siemens: T, s_base_mva: T, v_base_kv: T) -> Result<T> {
    if s_base_mva <= T::zero() || v_base_kv <= T::zero() {
        return Err(Error::Validation("bases must be positive".into()));
    }
    Ok(siemens * v_base_kv * v_base_kv / s_base_mva)
}

/// A column-norm threshold, either already in per unit or in siemens at the
/// default 20 kV voltage base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec<T> {
    PerUnit(T),
    Siemens(T),
}

impl<T: Float> ThresholdSpec<T> {
    /// Resolves to per unit on the given MVA base.
    pub fn resolve(&self, s_base_mva: T) -> Result<T> {
        match *self {
            ThresholdSpec::PerUnit(v) => Ok(v),
            ThresholdSpec::Siemens(v) => threshold_to_pu(v, s_base_mva, T::of(DEFAULT_V_BASE_KV)),
        }
    }
}

/// Which machines keep their nonlinear equations.
#[derive(Debug, Clone)]
pub struct FunctionSelection<T> {
    /// Column norm per machine, aligned with `gen_ids`. Machines forced
    /// nonlinear regardless of coupling may carry a zero here.
    pub norms: DVector<T>,
    /// Threshold in per unit that was applied.
    pub threshold_pu: T,
    /// Machine ids kept nonlinear.
    pub nonlinear_gens: BTreeSet<GenId>,
    /// Machine ids whose equations are linearized.
    pub linear_gens: BTreeSet<GenId>,
    /// Count of genuinely nonlinear retained functions: four per kept
    /// machine.
    pub q: usize,
    /// Machine ids in model row order.
    pub gen_ids: Vec<GenId>,
    /// Positions of nonlinear machines within `gen_ids`.
    pub nonlinear_idx: Vec<usize>,
    /// Positions of linearized machines within `gen_ids`.
    pub linear_idx: Vec<usize>,
}

impl<T: Float> FunctionSelection<T> {
    /// Number of machines in scope.
    pub fn ng(&self) -> usize {
        self.gen_ids.len()
    }

    /// Number of stacked states in scope.
    pub fn n(&self) -> usize {
        self.ng() * PER_MACHINE
    }

    /// State rows evaluated exactly: all nine rows of each kept machine.
    pub fn exact_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nonlinear_idx.len() * PER_MACHINE);
        for &i in &self.nonlinear_idx {
            rows.extend(i * PER_MACHINE..(i + 1) * PER_MACHINE);
        }
        rows
    }

    /// State rows taken from the linearized model.
    pub fn affine_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.linear_idx.len() * PER_MACHINE);
        for &i in &self.linear_idx {
            rows.extend(i * PER_MACHINE..(i + 1) * PER_MACHINE);
        }
        rows
    }

    /// Identity matrix with the exactly evaluated rows deleted; selects the
    /// affine rows of a stacked vector.
    pub fn p_hat(&self) -> DMatrix<T> {
        let rows = self.affine_rows();
        let mut p = DMatrix::zeros(rows.len(), self.n());
        for (r, &c) in rows.iter().enumerate() {
            p[(r, c)] = T::one();
        }
        p
    }
}

/// Selects which machines keep their nonlinear equations: those whose
/// column norm reaches `threshold_pu` and those listed in
/// `always_nonlinear`.
pub fn select_functions<T: Float>(
    norms: &DVector<T>,
    gen_ids: &[GenId],
    threshold_pu: T,
    always_nonlinear: &BTreeSet<GenId>,
) -> Result<FunctionSelection<T>> {
    if norms.len() != gen_ids.len() {
        return Err(Error::Dimension(format!(
            "{} norms for {} machines",
            norms.len(),
            gen_ids.len()
        )));
    }
    for id in always_nonlinear {
        if !gen_ids.contains(id) {
            return Err(Error::Validation(format!(
                "always-nonlinear generator {id} is not part of this model"
            )));
        }
    }
    let mut nonlinear_gens = BTreeSet::new();
    let mut linear_gens = BTreeSet::new();
    let mut nonlinear_idx = Vec::new();
    let mut linear_idx = Vec::new();
    for (i, id) in gen_ids.iter().enumerate() {
        if norms[i] >= threshold_pu || always_nonlinear.contains(id) {
            nonlinear_gens.insert(*id);
            nonlinear_idx.push(i);
        } else {
            linear_gens.insert(*id);
            linear_idx.push(i);
        }
    }
    let q = NONLINEAR_FIELDS.len() * nonlinear_idx.len();
    Ok(FunctionSelection {
        norms: norms.clone(),
        threshold_pu,
        nonlinear_gens,
        linear_gens,
        q,
        gen_ids: gen_ids.to_vec(),
        nonlinear_idx,
        linear_idx,
    })
}

/// A model that evaluates selected machines exactly and the rest through
/// the linearization, optionally in balanced reduced coordinates.
#[derive(Debug, Clone)]
pub struct HybridModel<T> {
    pub selection: FunctionSelection<T>,
    /// Balanced truncation applied to the state; `None` for an
    /// unpartitioned model that keeps physical coordinates.
    pub reduction: Option<BalancedReduction<T>>,
    /// Linearized dynamics of the affine rows. In reduced coordinates the
    /// columns act on the reduced state; otherwise on the physical
    /// deviation.
    pub a_hat: DMatrix<T>,
    /// Input coupling of the affine rows; absent without boundary inputs.
    pub b_hat: Option<DMatrix<T>>,
    /// Affine offset: the affine rows of the right-hand side at the
    /// linearization point.
    pub offset: DVector<T>,
    /// Linearization state.
    pub x0: DVector<T>,
    /// Linearization input, stacked `[theta; v]`.
    pub u0: DVector<T>,
    affine_rows: Vec<usize>,
    /// Sparse snapshot of `a_hat`; in physical coordinates the affine block
    /// inherits the Jacobian's block sparsity, and the product dominates the
    /// hybrid right-hand side cost.
    a_hat_sparse: SparseRows<T>,
}

impl<T: Float> HybridModel<T> {
    /// Builds the reduced-coordinate hybrid model of a partitioned area.
    pub fn partitioned(
        lin: &LinearModel<T>,
        reduction: BalancedReduction<T>,
        selection: FunctionSelection<T>,
    ) -> Result<Self> {
        if lin.n() != selection.n() {
            return Err(Error::Dimension("selection does not match model size".into()));
        }
        let rows = selection.affine_rows();
        let a_rows = lin.a.select_rows(&rows);
        let a_hat = &a_rows * &reduction.c_r;
        let b_hat = lin.b.select_rows(&rows);
        let offset = DVector::from_iterator(rows.len(), rows.iter().map(|&r| lin.f0[r]));
        let a_hat_sparse = SparseRows::from_dense(&a_hat);
        Ok(Self {
            selection,
            reduction: Some(reduction),
            a_hat,
            b_hat: Some(b_hat),
            offset,
            x0: lin.x0.clone(),
            u0: lin.u0.clone(),
            affine_rows: rows,
            a_hat_sparse,
        })
    }

    /// Builds the physical-coordinate hybrid model of an unpartitioned
    /// system (no boundary inputs, no truncation).
    pub fn unpartitioned(lin: &LinearModel<T>, selection: FunctionSelection<T>) -> Result<Self> {
        if lin.n() != selection.n() {
            return Err(Error::Dimension("selection does not match model size".into()));
        }
        let rows = selection.affine_rows();
        let a_hat = lin.a.select_rows(&rows);
        let offset = DVector::from_iterator(rows.len(), rows.iter().map(|&r| lin.f0[r]));
        let a_hat_sparse = SparseRows::from_dense(&a_hat);
        Ok(Self {
            selection,
            reduction: None,
            a_hat,
            b_hat: None,
            offset,
            x0: lin.x0.clone(),
            u0: lin.u0.clone(),
            affine_rows: rows,
            a_hat_sparse,
        })
    }

    /// Reduced order, or the full order when no truncation is applied.
    pub fn order(&self) -> usize {
        self.reduction.as_ref().map_or(self.x0.len(), |r| r.r)
    }

    /// Physical state corresponding to a reduced state.
    pub fn lift(&self, x_r: &DVector<T>) -> DVector<T> {
        match &self.reduction {
            Some(red) => &self.x0 + red.lift(x_r),
            None => x_r.clone(),
        }
    }

    /// Reduced state corresponding to a physical state.
    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        match &self.reduction {
            Some(red) => red.project(&(x - &self.x0)),
            None => x.clone(),
        }
    }
}

/// Right-hand side of the partitioned hybrid model in reduced coordinates.
///
/// The reduced state is lifted, the kept machines are evaluated exactly on
/// the lifted state, the linearized rows are evaluated from the reduced
/// state directly, and the stacked derivative is projected back.
pub fn rhs_hybrid<T: Float>(
    model: &HybridModel<T>,
    dyn_model: &DynModel<T>,
    x_r: &DVector<T>,
    u: &BoundaryInput<T>,
) -> DVector<T> {
    let red = model
        .reduction
        .as_ref()
        .expect("partitioned hybrid model carries a reduction");
    let x = model.lift(x_r);
    let mut g = DVector::zeros(model.x0.len());
    exact_rows_into(model, dyn_model, &x, u, &mut g);
    let du = u.stack() - &model.u0;
    let affine = &model.a_hat * x_r
        + model.b_hat.as_ref().expect("partitioned model has inputs") * du
        + &model.offset;
    for (k, &row) in model.affine_rows.iter().enumerate() {
        g[row] = affine[k];
    }
    red.t_r() * g
}

/// Right-hand side of the unpartitioned hybrid model in physical
/// coordinates.
pub fn rhs_hybrid_unpartitioned<T: Float>(
    model: &HybridModel<T>,
    dyn_model: &DynModel<T>,
    x: &DVector<T>,
    u: &BoundaryInput<T>,
) -> DVector<T> {
    let mut g = DVector::zeros(model.x0.len());
    exact_rows_into(model, dyn_model, x, u, &mut g);
    let mut affine = model.a_hat_sparse.mul(&(x - &model.x0));
    affine += &model.offset;
    for (k, &row) in model.affine_rows.iter().enumerate() {
        g[row] = affine[k];
    }
    g
}

/// Evaluates the exact machine rows of the full right-hand side into `out`,
/// computing currents only for the kept machines.
fn exact_rows_into<T: Float>(
    model: &HybridModel<T>,
    dyn_model: &DynModel<T>,
    x: &DVector<T>,
    u: &BoundaryInput<T>,
    out: &mut DVector<T>,
) {
    let ng = dyn_model.ng();
    let mut id = DVector::zeros(ng);
    let mut iq = DVector::zeros(ng);
    machine_currents_into(
        dyn_model,
        x,
        &u.theta,
        &u.v,
        &model.selection.nonlinear_idx,
        &mut id,
        &mut iq,
    );
    for &i in &model.selection.nonlinear_idx {
        machine_rhs_into(
            &dyn_model.params[i],
            x,
            i,
            id[i],
            iq[i],
            u.p_ref[i],
            u.v_ref[i],
            out,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_conversion_matches_reference_point() {
        // 0.25 S at 20 kV on a 100 MVA base is exactly 1.0 per unit.
        let pu = threshold_to_pu(0.25_f64, 100.0, 20.0).unwrap();
        assert_eq!(pu, 1.0);
        assert_eq!(
            ThresholdSpec::Siemens(0.25).resolve(100.0_f64).unwrap(),
            1.0
        );
        assert_eq!(ThresholdSpec::PerUnit(2.5).resolve(100.0_f64).unwrap(), 2.5);
    }

    #[test]
    fn column_norms_are_euclidean() {
        let y = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(3.0, 4.0),
                Complex::new(0.0, 0.0),
                Complex::new(0.0, 0.0),
                Complex::new(1.0, 1.0),
            ],
        );
        let n = column_norms(&y);
        assert_relative_eq!(n[0], 5.0, max_relative = 1e-15);
        assert_relative_eq!(n[1], 2.0_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn selection_splits_on_threshold() {
        let ids = [GenId(1), GenId(2), GenId(3), GenId(4)];
        let norms = DVector::from_vec(vec![5.0, 3.0, 1.0, 0.2]);
        let sel = select_functions(&norms, &ids, 2.0, &BTreeSet::new()).unwrap();
        assert_eq!(sel.nonlinear_idx, vec![0, 1]);
        assert_eq!(sel.linear_idx, vec![2, 3]);
        assert_eq!(sel.q, 8);
        assert!(sel.nonlinear_gens.contains(&GenId(1)));
        assert!(sel.linear_gens.contains(&GenId(4)));
        // Boundary value: a norm exactly at the threshold is kept.
        let sel = select_functions(&norms, &ids, 3.0, &BTreeSet::new()).unwrap();
        assert_eq!(sel.nonlinear_idx, vec![0, 1]);
    }

    #[test]
    fn always_nonlinear_overrides_threshold() {
        let ids = [GenId(1), GenId(2)];
        let norms = DVector::from_vec(vec![0.0, 0.0]);
        let mut always = BTreeSet::new();
        always.insert(GenId(2));
        let sel = select_functions(&norms, &ids, 1.0, &always).unwrap();
        assert_eq!(sel.nonlinear_idx, vec![1]);
        assert_eq!(sel.linear_idx, vec![0]);
        let missing = BTreeSet::from([GenId(9)]);
        assert!(select_functions(&norms, &ids, 1.0, &missing).is_err());
    }

    #[test]
    fn p_hat_deletes_exact_rows() {
        let ids = [GenId(1), GenId(2)];
        let norms = DVector::from_vec(vec![5.0, 0.1]);
        let sel = select_functions(&norms, &ids, 1.0, &BTreeSet::new()).unwrap();
        let p: DMatrix<f64> = sel.p_hat();
        assert_eq!(p.nrows(), 9);
        assert_eq!(p.ncols(), 18);
        for (r, &c) in sel.affine_rows().iter().enumerate() {
            assert_eq!(p[(r, c)], 1.0);
        }
        assert_eq!(p.sum(), 9.0);
        assert_eq!(sel.exact_rows(), (0..9).collect::<Vec<_>>());
        assert_eq!(sel.affine_rows(), (9..18).collect::<Vec<_>>());
    }
}
