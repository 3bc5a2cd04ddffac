//! Machine dynamics: the nine-state synchronous generator model, the stacked
//! system state, and the nonlinear right-hand side over a reduced network.
//!
//! Each generator carries rotor angle and speed, a non-reheat turbine with a
//! first-order governor, a continuously acting exciter with rate feedback and
//! exponential saturation, and the two-axis transient EMF states. Machines
//! couple through the reduced admittance blocks of a [`ReducedNetwork`]; the
//! voltages of the opposite area's boundary buses enter as inputs.

use crate::error::{Error, Result};
use crate::netmodel::{BusNetwork, GenId, ReducedNetwork, ReducedYMatrix};
use crate::scalar::{carg, cnorm, from_polar, omega_base, Float};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

/// Per-machine indices into a 9-state block, in state-vector order.
pub mod state_index {
    /// Rotor angle in radians.
    pub const DELTA: usize = 0;
    /// Mechanical power in per unit.
    pub const PM: usize = 1;
    /// Governor output power in per unit.
    pub const PGV: usize = 2;
    /// Voltage regulator output.
    pub const VR: usize = 3;
    /// Exciter rate feedback.
    pub const RF: usize = 4;
    /// Field voltage.
    pub const EFD: usize = 5;
    /// d-axis transient EMF.
    pub const ED_P: usize = 6;
    /// q-axis transient EMF.
    pub const EQ_P: usize = 7;
    /// Rotor speed in per unit of synchronous speed.
    pub const OMEGA: usize = 8;
    /// States per machine.
    pub const PER_MACHINE: usize = 9;
    /// Fields whose differential equations are genuinely nonlinear; the
    /// first five rows of a machine are linear in the states.
    pub const NONLINEAR_FIELDS: [usize; 4] = [EFD, ED_P, EQ_P, OMEGA];
}

/// Parameters of one synchronous generator, all in per unit on the system
/// base except time constants (seconds) and gains (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams<T> {
    /// Inertia constant in seconds.
    pub h: T,
    /// Damping coefficient.
    pub d: T,
    /// d-axis synchronous reactance.
    pub xd: T,
    /// q-axis synchronous reactance.
    pub xq: T,
    /// d-axis transient reactance.
    pub xd_p: T,
    /// q-axis transient reactance.
    pub xq_p: T,
    /// Stator resistance.
    pub ra: T,
    /// d-axis open-circuit transient time constant.
    pub tdo_p: T,
    /// q-axis open-circuit transient time constant.
    pub tqo_p: T,
    /// Turbine charging time constant.
    pub tch: T,
    /// Governor time constant.
    pub tgv: T,
    /// Governor speed regulation (droop).
    pub r_gov: T,
    /// Regulator amplifier gain.
    pub ka: T,
    /// Regulator amplifier time constant.
    pub ta: T,
    /// Rate feedback gain.
    pub kf: T,
    /// Rate feedback time constant.
    pub tf: T,
    /// Exciter gain.
    pub ke: T,
    /// Exciter time constant.
    pub te: T,
    /// Saturation magnitude coefficient.
    pub ae: T,
    /// Saturation exponent coefficient.
    pub be: T,
}

impl<T: Float> GeneratorParams<T> {
    /// Checks physical plausibility of the parameter set.
    pub fn validate(&self) -> Result<(), String> {
        let positive: [(&str, T); 9] = [
            ("h", self.h),
            ("tdo_p", self.tdo_p),
            ("tqo_p", self.tqo_p),
            ("tch", self.tch),
            ("tgv", self.tgv),
            ("r_gov", self.r_gov),
            ("ta", self.ta),
            ("tf", self.tf),
            ("te", self.te),
        ];
        for (name, v) in positive {
            if v <= T::zero() {
                return Err(format!("{name} must be positive"));
            }
        }
        let nonneg: [(&str, T); 4] = [
            ("d", self.d),
            ("ra", self.ra),
            ("ae", self.ae),
            ("be", self.be),
        ];
        for (name, v) in nonneg {
            if v < T::zero() {
                return Err(format!("{name} must be nonnegative"));
            }
        }
        if self.xd_p <= T::zero() || self.xq_p <= T::zero() {
            return Err("transient reactances must be positive".into());
        }
        if self.xd < self.xd_p || self.xq < self.xq_p {
            return Err("synchronous reactances must not be below transient ones".into());
        }
        if self.ka <= T::zero() || self.ke <= T::zero() || self.kf < T::zero() {
            return Err("exciter gains ka, ke must be positive and kf nonnegative".into());
        }
        Ok(())
    }

    /// Exciter saturation `ae * exp(be * efd)`.
    pub fn saturation(&self, efd: T) -> T {
        self.ae * (self.be * efd).exp()
    }
}

/// The nine states of one machine.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MachineState<T> {
    pub delta: T,
    pub pm: T,
    pub pgv: T,
    pub vr: T,
    pub rf: T,
    pub efd: T,
    pub ed_p: T,
    pub eq_p: T,
    pub omega: T,
}

impl<T: Float> MachineState<T> {
    /// States in state-vector order.
    pub fn to_array(self) -> [T; 9] {
        [
            self.delta, self.pm, self.pgv, self.vr, self.rf, self.efd, self.ed_p, self.eq_p,
            self.omega,
        ]
    }

    /// Builds from a 9-element slice in state-vector order.
    pub fn from_slice(s: &[T]) -> Self {
        assert_eq!(s.len(), state_index::PER_MACHINE);
        Self {
            delta: s[0],
            pm: s[1],
            pgv: s[2],
            vr: s[3],
            rf: s[4],
            efd: s[5],
            ed_p: s[6],
            eq_p: s[7],
            omega: s[8],
        }
    }
}

/// States of every machine of one model, stacked machine-major: state `9 i +
/// k` is field `k` of machine `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    pub machines: Vec<MachineState<T>>,
}

impl<T: Float> SystemState<T> {
    /// Number of stacked states.
    pub fn n(&self) -> usize {
        self.machines.len() * state_index::PER_MACHINE
    }

    /// Stacks into a flat vector.
    pub fn to_vector(&self) -> DVector<T> {
        let mut v = DVector::zeros(self.n());
        for (i, m) in self.machines.iter().enumerate() {
            v.rows_mut(i * state_index::PER_MACHINE, state_index::PER_MACHINE)
                .copy_from_slice(&m.to_array());
        }
        v
    }

    /// Rebuilds from a flat vector.
    pub fn from_vector(v: &DVector<T>) -> Result<Self> {
        if v.len() % state_index::PER_MACHINE != 0 {
            return Err(Error::Dimension(format!(
                "state length {} is not a multiple of {}",
                v.len(),
                state_index::PER_MACHINE
            )));
        }
        let machines = v
            .as_slice()
            .chunks(state_index::PER_MACHINE)
            .map(MachineState::from_slice)
            .collect();
        Ok(Self { machines })
    }
}

/// Inputs of one dynamic model: boundary-bus voltages of the opposite area
/// plus the constant per-machine setpoints.
///
/// The stacked input vector is `[theta_1..theta_Nb, v_1..v_Nb]`; setpoints
/// are not part of it because they never vary during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryInput<T> {
    /// Boundary voltage angles in radians, one per fictitious source.
    pub theta: DVector<T>,
    /// Boundary voltage magnitudes in per unit.
    pub v: DVector<T>,
    /// Governor reference power per machine.
    pub p_ref: DVector<T>,
    /// Regulator reference voltage per machine.
    pub v_ref: DVector<T>,
}

impl<T: Float> BoundaryInput<T> {
    /// Input vector `[theta; v]` of length `2 Nb`.
    pub fn stack(&self) -> DVector<T> {
        let nb = self.theta.len();
        let mut u = DVector::zeros(2 * nb);
        u.rows_mut(0, nb).copy_from(&self.theta);
        u.rows_mut(nb, nb).copy_from(&self.v);
        u
    }

    /// Replaces the boundary voltages from a stacked `[theta; v]` vector.
    pub fn set_stacked(&mut self, u: &DVector<T>) {
        let nb = self.theta.len();
        assert_eq!(u.len(), 2 * nb);
        self.theta.copy_from(&u.rows(0, nb).into_owned());
        self.v.copy_from(&u.rows(nb, nb).into_owned());
    }

    /// Replaces the boundary voltages with the given phasors.
    pub fn set_phasors(&mut self, phasors: &[Complex<T>]) {
        assert_eq!(phasors.len(), self.theta.len());
        for (i, p) in phasors.iter().enumerate() {
            self.theta[i] = carg(*p);
            self.v[i] = cnorm(*p);
        }
    }
}

/// A ready-to-integrate dynamic model: machine parameters plus the real and
/// imaginary parts of the reduced admittance blocks.
#[derive(Debug, Clone)]
pub struct DynModel<T> {
    pub params: Vec<GeneratorParams<T>>,
    pub gen_ids: Vec<GenId>,
    g11: DMatrix<T>,
    b11: DMatrix<T>,
    g12: DMatrix<T>,
    b12: DMatrix<T>,
}

impl<T: Float> DynModel<T> {
    /// Gathers parameters for the machines of `rn` from the network record.
    pub fn new(net: &BusNetwork<T>, rn: &ReducedNetwork<T>) -> Result<Self> {
        Self::from_ym(net, &rn.ym)
    }

    /// Builds directly from a reduced admittance matrix.
    pub fn from_ym(net: &BusNetwork<T>, ym: &ReducedYMatrix<T>) -> Result<Self> {
        let params = ym
            .gen_order
            .iter()
            .map(|id| {
                net.generators
                    .iter()
                    .find(|g| g.id == *id)
                    .map(|g| g.params)
                    .ok_or_else(|| Error::Validation(format!("unknown generator {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            gen_ids: ym.gen_order.clone(),
            g11: ym.y11.map(|c| c.re),
            b11: ym.y11.map(|c| c.im),
            g12: ym.y12.map(|c| c.re),
            b12: ym.y12.map(|c| c.im),
        })
    }

    /// Number of machines.
    pub fn ng(&self) -> usize {
        self.params.len()
    }

    /// Number of boundary inputs (fictitious sources).
    pub fn nb(&self) -> usize {
        self.g12.ncols()
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.ng() * state_index::PER_MACHINE
    }

    /// Number of stacked inputs.
    pub fn m(&self) -> usize {
        2 * self.nb()
    }

    /// Real part of the machine coupling block.
    pub fn g11(&self) -> &DMatrix<T> {
        &self.g11
    }

    /// Imaginary part of the machine coupling block.
    pub fn b11(&self) -> &DMatrix<T> {
        &self.b11
    }

    /// Real part of the machine-to-source block.
    pub fn g12(&self) -> &DMatrix<T> {
        &self.g12
    }

    /// Imaginary part of the machine-to-source block.
    pub fn b12(&self) -> &DMatrix<T> {
        &self.b12
    }

    /// Internal EMF phasors `(ed_p + j eq_p) e^{j(delta - pi/2)}` of every
    /// machine, used for boundary-voltage recovery.
    pub fn emf_phasors(&self, x: &DVector<T>) -> Vec<Complex<T>> {
        use state_index::*;
        (0..self.ng())
            .map(|i| {
                let b = i * PER_MACHINE;
                let e = Complex::new(x[b + ED_P], x[b + EQ_P]);
                let half_pi = T::pi() / T::of(2.0);
                e * from_polar(T::one(), x[b + DELTA] - half_pi)
            })
            .collect()
    }
}

/// d- and q-axis stator currents of the machines listed in `rows`, written
/// into `id`/`iq` at those positions. Other entries are left untouched.
pub fn machine_currents_into<T: Float>(
    model: &DynModel<T>,
    x: &DVector<T>,
    theta: &DVector<T>,
    v: &DVector<T>,
    rows: &[usize],
    id: &mut DVector<T>,
    iq: &mut DVector<T>,
) {
    use state_index::*;
    let ng = model.ng();
    let nb = model.nb();
    for &i in rows {
        let di = x[i * PER_MACHINE + DELTA];
        let mut sum_d = T::zero();
        let mut sum_q = T::zero();
        for j in 0..ng {
            let bj = j * PER_MACHINE;
            let (ed, eq) = (x[bj + ED_P], x[bj + EQ_P]);
            let ang = di - x[bj + DELTA];
            let (s, c) = (ang.sin(), ang.cos());
            let g = model.g11[(i, j)];
            let b = model.b11[(i, j)];
            sum_d += ed * (g * c + b * s) + eq * (g * s - b * c);
            sum_q += ed * (b * c - g * s) + eq * (g * c + b * s);
        }
        for j in 0..nb {
            let ang = di - theta[j];
            let (s, c) = (ang.sin(), ang.cos());
            let g = model.g12[(i, j)];
            let b = model.b12[(i, j)];
            sum_d += v[j] * (g * s - b * c);
            sum_q += v[j] * (g * c + b * s);
        }
        id[i] = sum_d;
        iq[i] = sum_q;
    }
}

/// d- and q-axis stator currents of every machine.
pub fn machine_currents<T: Float>(
    model: &DynModel<T>,
    x: &DVector<T>,
    u: &BoundaryInput<T>,
) -> (DVector<T>, DVector<T>) {
    let ng = model.ng();
    let mut id = DVector::zeros(ng);
    let mut iq = DVector::zeros(ng);
    let rows: Vec<usize> = (0..ng).collect();
    machine_currents_into(model, x, &u.theta, &u.v, &rows, &mut id, &mut iq);
    (id, iq)
}

/// Terminal voltage magnitude of machine `i` from its EMF and current.
pub fn terminal_voltage<T: Float>(p: &GeneratorParams<T>, ed_p: T, eq_p: T, id: T, iq: T) -> T {
    let vd = ed_p - p.ra * id + p.xd_p * iq;
    let vq = eq_p - p.ra * iq - p.xd_p * id;
    (vd * vd + vq * vq).sqrt()
}

/// Writes the nine state derivatives of machine `i` into `out` at its block.
pub fn machine_rhs_into<T: Float>(
    p: &GeneratorParams<T>,
    x: &DVector<T>,
    i: usize,
    id_i: T,
    iq_i: T,
    p_ref: T,
    v_ref: T,
    out: &mut DVector<T>,
) {
    use state_index::*;
    let b = i * PER_MACHINE;
    let (pm, pgv, vr, rf) = (x[b + PM], x[b + PGV], x[b + VR], x[b + RF]);
    let (efd, ed, eq, w) = (x[b + EFD], x[b + ED_P], x[b + EQ_P], x[b + OMEGA]);
    let one = T::one();
    let slip = w - one;
    let vt = terminal_voltage(p, ed, eq, id_i, iq_i);
    out[b + DELTA] = omega_base::<T>() * slip;
    out[b + PM] = (-pm + pgv) / p.tch;
    out[b + PGV] = (-pgv + p_ref - slip / p.r_gov) / p.tgv;
    out[b + VR] = (-vr + p.ka * rf - p.ka * p.kf / p.tf * efd + p.ka * (v_ref - vt)) / p.ta;
    out[b + RF] = (-rf + p.kf / p.tf * efd) / p.tf;
    out[b + EFD] = (-(p.ke + p.saturation(efd)) * efd + vr) / p.te;
    out[b + ED_P] = (-ed + (p.xq - p.xq_p) * iq_i) / p.tqo_p;
    out[b + EQ_P] = (-eq - (p.xd - p.xd_p) * id_i + efd) / p.tdo_p;
    out[b + OMEGA] = (pm - ed * id_i - eq * iq_i - p.d * slip) / (T::of(2.0) * p.h);
}

/// Full nonlinear right-hand side of the model.
pub fn rhs_full<T: Float>(model: &DynModel<T>, x: &DVector<T>, u: &BoundaryInput<T>) -> DVector<T> {
    let (id, iq) = machine_currents(model, x, u);
    let mut out = DVector::zeros(model.n());
    for i in 0..model.ng() {
        machine_rhs_into(
            &model.params[i],
            x,
            i,
            id[i],
            iq[i],
            u.p_ref[i],
            u.v_ref[i],
            &mut out,
        );
    }
    out
}

/// Steady-state machine states and inputs consistent with the solved power
/// flow carried by the network record.
#[derive(Debug, Clone)]
pub struct Equilibrium<T> {
    pub state: SystemState<T>,
    pub inputs: BoundaryInput<T>,
}

/// Initializes every machine of `rn` at its power-flow operating point and
/// backsolves the setpoints so the state is an exact equilibrium.
///
/// The machine model couples to the network through `ra + j xd_p` on both
/// axes; initialization is exact when `xq_p == xd_p`. The residual of the
/// full right-hand side is checked and any machine whose equations do not
/// balance to `1e-8` is reported.
pub fn init_equilibrium<T: Float>(
    net: &BusNetwork<T>,
    rn: &ReducedNetwork<T>,
) -> Result<Equilibrium<T>> {
    let model = DynModel::new(net, rn)?;
    let ng = model.ng();
    let nb = rn.ym.nb();
    let half_pi = T::pi() / T::of(2.0);

    let mut machines = Vec::with_capacity(ng);
    let mut p_ref = DVector::zeros(ng);
    let mut v_ref = DVector::zeros(ng);
    for (i, gid) in rn.ym.gen_order.iter().enumerate() {
        let gen = net
            .generators
            .iter()
            .find(|g| g.id == *gid)
            .expect("gen order comes from the network");
        let p = &gen.params;
        let vt = net
            .bus_phasor(gen.bus_id)
            .ok_or_else(|| Error::Validation(format!("unknown bus {}", gen.bus_id)))?;
        let s = Complex::new(gen.dispatch_p, gen.dispatch_q);
        let i_term = (s / vt).conj();
        let delta = carg(vt + Complex::new(p.ra, p.xq) * i_term);
        let rot = from_polar(T::one(), -(delta - half_pi));
        let v_dq = vt * rot;
        let i_dq = i_term * rot;
        let (id, iq) = (i_dq.re, i_dq.im);
        let ed_p = (p.xq - p.xq_p) * iq;
        let eq_p = v_dq.im + p.ra * iq + p.xd_p * id;
        let efd = eq_p + (p.xd - p.xd_p) * id;
        let vr = (p.ke + p.saturation(efd)) * efd;
        let rf = p.kf / p.tf * efd;
        let vt_mag = terminal_voltage(p, ed_p, eq_p, id, iq);
        v_ref[i] = vt_mag + vr / p.ka;
        let pe = ed_p * id + eq_p * iq;
        p_ref[i] = pe;
        machines.push(MachineState {
            delta,
            pm: pe,
            pgv: pe,
            vr,
            rf,
            efd,
            ed_p,
            eq_p,
            omega: T::one(),
        });
    }

    let mut theta = DVector::zeros(nb);
    let mut v = DVector::zeros(nb);
    for (t, tie) in rn.ties.iter().enumerate() {
        let ph = net
            .bus_phasor(tie.opposite_bus)
            .ok_or_else(|| Error::Validation(format!("unknown bus {}", tie.opposite_bus)))?;
        theta[t] = carg(ph);
        v[t] = cnorm(ph);
    }

    let state = SystemState { machines };
    let inputs = BoundaryInput {
        theta,
        v,
        p_ref,
        v_ref,
    };
    let residual = rhs_full(&model, &state.to_vector(), &inputs);
    let tol = T::of(1e-8);
    let mut worst = (0usize, T::zero());
    for (k, r) in residual.iter().enumerate() {
        if r.abs() > worst.1 {
            worst = (k, r.abs());
        }
    }
    if worst.1 > tol {
        let machine = worst.0 / state_index::PER_MACHINE;
        return Err(Error::Equilibrium {
            gen: rn.ym.gen_order[machine].0,
            message: format!(
                "state derivative {:e} exceeds {:e}; check the power flow and xq_p == xd_p",
                worst.1.to_f64_lossy(),
                tol.to_f64_lossy()
            ),
        });
    }
    Ok(Equilibrium { state, inputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> GeneratorParams<f64> {
        GeneratorParams {
            h: 6.5,
            d: 2.0,
            xd: 1.8,
            xq: 1.7,
            xd_p: 0.3,
            xq_p: 0.3,
            ra: 0.003,
            tdo_p: 8.0,
            tqo_p: 0.8,
            tch: 0.4,
            tgv: 0.2,
            r_gov: 0.05,
            ka: 20.0,
            ta: 0.2,
            kf: 0.063,
            tf: 0.35,
            ke: 1.0,
            te: 0.314,
            ae: 0.0039,
            be: 1.555,
        }
    }

    #[test]
    fn params_validation_catches_bad_values() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.h = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.xd = 0.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn state_round_trip_preserves_order() {
        let m = MachineState {
            delta: 1.0,
            pm: 2.0,
            pgv: 3.0,
            vr: 4.0,
            rf: 5.0,
            efd: 6.0,
            ed_p: 7.0,
            eq_p: 8.0,
            omega: 9.0,
        };
        let sys = SystemState {
            machines: vec![m, m],
        };
        let v = sys.to_vector();
        assert_eq!(v.len(), 18);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[8], 9.0);
        assert_eq!(v[9], 1.0);
        let back = SystemState::from_vector(&v).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn rotor_angle_rate_at_one_percent_overspeed() {
        use state_index::*;
        let p = params();
        let mut x = DVector::zeros(9);
        x[OMEGA] = 1.01;
        x[EQ_P] = 1.0;
        let mut out = DVector::zeros(9);
        machine_rhs_into(&p, &x, 0, 0.0, 0.0, 0.0, 0.0, &mut out);
        assert_relative_eq!(out[DELTA], 120.0 * std::f64::consts::PI * 0.01, max_relative = 1e-14);
    }

    #[test]
    fn swing_row_balances_power() {
        use state_index::*;
        let p = params();
        let mut x = DVector::zeros(9);
        x[OMEGA] = 1.0;
        x[PM] = 0.9;
        x[ED_P] = 0.1;
        x[EQ_P] = 1.0;
        let (id, iq) = (0.4, 0.5);
        let mut out = DVector::zeros(9);
        machine_rhs_into(&p, &x, 0, id, iq, 0.0, 0.0, &mut out);
        let pe = 0.1 * 0.4 + 1.0 * 0.5;
        assert_relative_eq!(out[OMEGA], (0.9 - pe) / (2.0 * 6.5), max_relative = 1e-14);
    }

    #[test]
    fn saturation_is_exponential() {
        let p = params();
        assert_relative_eq!(
            p.saturation(2.0),
            0.0039 * (1.555 * 2.0_f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn terminal_voltage_of_unloaded_machine_is_emf() {
        let p = params();
        assert_relative_eq!(terminal_voltage(&p, 0.0, 1.05, 0.0, 0.0), 1.05, max_relative = 1e-15);
    }
}
