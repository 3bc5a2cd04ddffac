//! Analytic linearization of the machine dynamics around an operating point.
//!
//! The state Jacobian `A` and input Jacobian `B` are assembled from closed
//! form partial derivatives of the network current sums; nothing is
//! differentiated numerically. The output matrix is the identity: every
//! state is observed.

use crate::dynamics::{machine_currents, state_index::*, BoundaryInput, DynModel};
use crate::scalar::{omega_base, Float};
use nalgebra::{DMatrix, DVector};

/// Values and partial derivatives of the stator currents at a point.
///
/// `id_delta[(i, k)]` is the derivative of `Id_i` with respect to the rotor
/// angle of machine `k`, and similarly for the EMF states and the boundary
/// inputs.
pub struct CurrentPartials<T> {
    pub id: DVector<T>,
    pub iq: DVector<T>,
    pub id_delta: DMatrix<T>,
    pub id_ed: DMatrix<T>,
    pub id_eq: DMatrix<T>,
    pub iq_delta: DMatrix<T>,
    pub iq_ed: DMatrix<T>,
    pub iq_eq: DMatrix<T>,
    pub id_theta: DMatrix<T>,
    pub id_v: DMatrix<T>,
    pub iq_theta: DMatrix<T>,
    pub iq_v: DMatrix<T>,
}

/// Evaluates the stator currents and all their partial derivatives.
pub fn current_partials<T: Float>(
    model: &DynModel<T>,
    x: &DVector<T>,
    u: &BoundaryInput<T>,
) -> CurrentPartials<T> {
    let ng = model.ng();
    let nb = model.nb();
    let (id, iq) = machine_currents(model, x, u);
    let mut p = CurrentPartials {
        id,
        iq,
        id_delta: DMatrix::zeros(ng, ng),
        id_ed: DMatrix::zeros(ng, ng),
        id_eq: DMatrix::zeros(ng, ng),
        iq_delta: DMatrix::zeros(ng, ng),
        iq_ed: DMatrix::zeros(ng, ng),
        iq_eq: DMatrix::zeros(ng, ng),
        id_theta: DMatrix::zeros(ng, nb),
        id_v: DMatrix::zeros(ng, nb),
        iq_theta: DMatrix::zeros(ng, nb),
        iq_v: DMatrix::zeros(ng, nb),
    };
    for i in 0..ng {
        let di = x[i * PER_MACHINE + DELTA];
        for k in 0..ng {
            let bk = k * PER_MACHINE;
            let (ed, eq) = (x[bk + ED_P], x[bk + EQ_P]);
            let ang = di - x[bk + DELTA];
            let (s, c) = (ang.sin(), ang.cos());
            let g = model.g11()[(i, k)];
            let b = model.b11()[(i, k)];
            let gc_bs = g * c + b * s;
            let gs_bc = g * s - b * c;
            p.id_ed[(i, k)] = gc_bs;
            p.id_eq[(i, k)] = gs_bc;
            p.iq_ed[(i, k)] = -gs_bc;
            p.iq_eq[(i, k)] = gc_bs;
            if k != i {
                // The i == i self term has an identically zero angle
                // difference, so it contributes nothing to either angle
                // derivative.
                p.id_delta[(i, k)] = ed * gs_bc - eq * gc_bs;
                p.iq_delta[(i, k)] = ed * gc_bs + eq * gs_bc;
                p.id_delta[(i, i)] += -ed * gs_bc + eq * gc_bs;
                p.iq_delta[(i, i)] += -ed * gc_bs - eq * gs_bc;
            }
        }
        for t in 0..nb {
            let ang = di - u.theta[t];
            let (s, c) = (ang.sin(), ang.cos());
            let g = model.g12()[(i, t)];
            let b = model.b12()[(i, t)];
            let gc_bs = g * c + b * s;
            let gs_bc = g * s - b * c;
            let v = u.v[t];
            p.id_delta[(i, i)] += v * gc_bs;
            p.iq_delta[(i, i)] += -v * gs_bc;
            p.id_theta[(i, t)] = -v * gc_bs;
            p.iq_theta[(i, t)] = v * gs_bc;
            p.id_v[(i, t)] = gs_bc;
            p.iq_v[(i, t)] = gc_bs;
        }
    }
    p
}

/// How machine `i`'s terminal voltage varies with one scalar. `did`/`diq`
/// are the current partials with respect to that scalar; `own_ed`/`own_eq`
/// flag differentiation by the machine's own EMF states.
fn vt_partial<T: Float>(
    p: &crate::dynamics::GeneratorParams<T>,
    ed: T,
    eq: T,
    id: T,
    iq: T,
    did: T,
    diq: T,
    own_ed: bool,
    own_eq: bool,
) -> T {
    let vd = ed - p.ra * id + p.xd_p * iq;
    let vq = eq - p.ra * iq - p.xd_p * id;
    let vt = (vd * vd + vq * vq).sqrt();
    if vt <= T::of(1e-12) {
        return T::zero();
    }
    let mut dvd = -p.ra * did + p.xd_p * diq;
    if own_ed {
        dvd += T::one();
    }
    let mut dvq = -p.ra * diq - p.xd_p * did;
    if own_eq {
        dvq += T::one();
    }
    (vd * dvd + vq * dvq) / vt
}

/// State Jacobian of the full right-hand side at `(x0, u0)`.
pub fn jacobian_a<T: Float>(model: &DynModel<T>, x0: &DVector<T>, u0: &BoundaryInput<T>) -> DMatrix<T> {
    let ng = model.ng();
    let n = model.n();
    let cp = current_partials(model, x0, u0);
    let mut a = DMatrix::zeros(n, n);
    let two = T::of(2.0);
    for i in 0..ng {
        let p = &model.params[i];
        let bi = i * PER_MACHINE;
        let (ed, eq, efd) = (x0[bi + ED_P], x0[bi + EQ_P], x0[bi + EFD]);
        let (id, iq) = (cp.id[i], cp.iq[i]);

        a[(bi + DELTA, bi + OMEGA)] = omega_base::<T>();
        a[(bi + PM, bi + PM)] = -T::one() / p.tch;
        a[(bi + PM, bi + PGV)] = T::one() / p.tch;
        a[(bi + PGV, bi + PGV)] = -T::one() / p.tgv;
        a[(bi + PGV, bi + OMEGA)] = -T::one() / (p.r_gov * p.tgv);
        a[(bi + VR, bi + VR)] = -T::one() / p.ta;
        a[(bi + VR, bi + RF)] = p.ka / p.ta;
        a[(bi + VR, bi + EFD)] = -p.ka * p.kf / (p.tf * p.ta);
        a[(bi + RF, bi + RF)] = -T::one() / p.tf;
        a[(bi + RF, bi + EFD)] = p.kf / (p.tf * p.tf);
        a[(bi + EFD, bi + VR)] = T::one() / p.te;
        let sat = p.saturation(efd);
        a[(bi + EFD, bi + EFD)] = -(p.ke + sat * (T::one() + p.be * efd)) / p.te;
        a[(bi + EQ_P, bi + EFD)] = T::one() / p.tdo_p;
        a[(bi + OMEGA, bi + PM)] = T::one() / (two * p.h);
        a[(bi + OMEGA, bi + OMEGA)] = -p.d / (two * p.h);

        // Rows coupled through the network currents: for every machine k's
        // delta, ed_p, eq_p columns apply the chain rule once.
        for k in 0..ng {
            let bk = k * PER_MACHINE;
            for (col, did, diq) in [
                (bk + DELTA, cp.id_delta[(i, k)], cp.iq_delta[(i, k)]),
                (bk + ED_P, cp.id_ed[(i, k)], cp.iq_ed[(i, k)]),
                (bk + EQ_P, cp.id_eq[(i, k)], cp.iq_eq[(i, k)]),
            ] {
                let own_ed = col == bi + ED_P;
                let own_eq = col == bi + EQ_P;
                let dvt = vt_partial(p, ed, eq, id, iq, did, diq, own_ed, own_eq);
                a[(bi + VR, col)] += -p.ka * dvt / p.ta;
                a[(bi + ED_P, col)] += ((p.xq - p.xq_p) * diq
                    - if own_ed { T::one() } else { T::zero() })
                    / p.tqo_p;
                a[(bi + EQ_P, col)] += (-(p.xd - p.xd_p) * did
                    - if own_eq { T::one() } else { T::zero() })
                    / p.tdo_p;
                let mut dpe = ed * did + eq * diq;
                if own_ed {
                    dpe += id;
                }
                if own_eq {
                    dpe += iq;
                }
                a[(bi + OMEGA, col)] += -dpe / (two * p.h);
            }
        }
    }
    a
}

/// Input Jacobian of the full right-hand side at `(x0, u0)`, with inputs
/// stacked `[theta; v]`.
pub fn jacobian_b<T: Float>(model: &DynModel<T>, x0: &DVector<T>, u0: &BoundaryInput<T>) -> DMatrix<T> {
    let ng = model.ng();
    let nb = model.nb();
    let cp = current_partials(model, x0, u0);
    let mut bmat = DMatrix::zeros(model.n(), 2 * nb);
    let two = T::of(2.0);
    for i in 0..ng {
        let p = &model.params[i];
        let bi = i * PER_MACHINE;
        let (ed, eq) = (x0[bi + ED_P], x0[bi + EQ_P]);
        let (id, iq) = (cp.id[i], cp.iq[i]);
        for t in 0..nb {
            for (col, did, diq) in [
                (t, cp.id_theta[(i, t)], cp.iq_theta[(i, t)]),
                (nb + t, cp.id_v[(i, t)], cp.iq_v[(i, t)]),
            ] {
                let dvt = vt_partial(p, ed, eq, id, iq, did, diq, false, false);
                bmat[(bi + VR, col)] += -p.ka * dvt / p.ta;
                bmat[(bi + ED_P, col)] += (p.xq - p.xq_p) * diq / p.tqo_p;
                bmat[(bi + EQ_P, col)] += -(p.xd - p.xd_p) * did / p.tdo_p;
                bmat[(bi + OMEGA, col)] += -(ed * did + eq * diq) / (two * p.h);
            }
        }
    }
    bmat
}

/// A model linearized at `(x0, u0)`: the first-order expansion
/// `dx/dt = f0 + A (x - x0) + B (u - u0)` with every state observed.
#[derive(Debug, Clone)]
pub struct LinearModel<T> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    /// Linearization state.
    pub x0: DVector<T>,
    /// Linearization input, stacked `[theta; v]`.
    pub u0: DVector<T>,
    /// Right-hand side at the linearization point; zero at an equilibrium.
    pub f0: DVector<T>,
}

impl<T: Float> LinearModel<T> {
    /// Linearizes the model at the given point.
    pub fn at(model: &DynModel<T>, x0: &DVector<T>, u0: &BoundaryInput<T>) -> Self {
        Self {
            a: jacobian_a(model, x0, u0),
            b: jacobian_b(model, x0, u0),
            x0: x0.clone(),
            u0: u0.stack(),
            f0: crate::dynamics::rhs_full(model, x0, u0),
        }
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// The output matrix: exactly the identity, since the outputs are the
    /// states themselves.
    pub fn c(&self) -> DMatrix<T> {
        DMatrix::identity(self.n(), self.n())
    }

    /// Evaluates the affine right-hand side at `(x, u)`.
    pub fn rhs(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.f0 + &self.a * (x - &self.x0) + &self.b * (u - &self.u0)
    }
}
