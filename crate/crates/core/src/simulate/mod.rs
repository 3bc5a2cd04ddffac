//! Time-domain simulation: the fixed-step integrator, the mode switching
//! logic, scenario configuration, and the trajectory container.
//!
//! The heavy lifting lives in [`engine`]: it precomputes the per-phase
//! networks and reduced models for a scenario, then integrates it under one
//! of four policies.

mod engine;

pub use engine::{Engine, PartModels, PhaseModel};

use crate::dynamics::state_index::{DELTA, OMEGA, PER_MACHINE};
use crate::error::{Error, Result};
use crate::netmodel::{BranchId, BusId, GenId};
use crate::scalar::Float;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Representation used for the external dynamics at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Original fully detailed equations.
    Full,
    /// Partially linearized model with selected machines kept nonlinear.
    Hybrid,
    /// Purely linear model.
    Linear,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Full => write!(f, "full"),
            Mode::Hybrid => write!(f, "hybrid"),
            Mode::Linear => write!(f, "linear"),
        }
    }
}

/// Simulation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Monolithic fully detailed model throughout; the accuracy reference.
    FullOnly,
    /// Study area in full detail, external area always the linear reduced
    /// model.
    LinearOnly,
    /// Adaptive switching on the partitioned system: full during faults,
    /// hybrid while angles deviate, linear otherwise.
    AdaptivePartitioned,
    /// Adaptive switching on the unpartitioned system in physical
    /// coordinates.
    AdaptiveUnpartitioned,
}

impl Policy {
    /// All policies, in reporting order.
    pub const ALL: [Policy; 4] = [
        Policy::FullOnly,
        Policy::LinearOnly,
        Policy::AdaptivePartitioned,
        Policy::AdaptiveUnpartitioned,
    ];
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::FullOnly => write!(f, "full_only"),
            Policy::LinearOnly => write!(f, "linear_only"),
            Policy::AdaptivePartitioned => write!(f, "adaptive_partitioned"),
            Policy::AdaptiveUnpartitioned => write!(f, "adaptive_unpartitioned"),
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_only" => Ok(Policy::FullOnly),
            "linear_only" => Ok(Policy::LinearOnly),
            "adaptive_partitioned" => Ok(Policy::AdaptivePartitioned),
            "adaptive_unpartitioned" => Ok(Policy::AdaptiveUnpartitioned),
            other => Err(Error::Scenario(format!("unknown policy '{other}'"))),
        }
    }
}

/// What happens when the fault clears.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostFaultAction {
    /// The fault is removed and the network returns to its pre-fault shape.
    None,
    /// The given branch is tripped at clearing time.
    TripLine(BranchId),
    /// Every branch incident to the faulted bus is tripped.
    TripBus,
}

/// A bolted three-phase fault and its clearing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec<T> {
    pub bus: BusId,
    /// Fault application time in seconds.
    pub t_on: T,
    /// Fault clearing time in seconds.
    pub t_clear: T,
    pub post_action: PostFaultAction,
}

/// Thresholds that drive the adaptive mode switching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingConfig<T> {
    /// Rotor-angle deviation limit in degrees for the partitioned system.
    pub delta_max_deg: T,
    /// Deviation limit in degrees for the unpartitioned system.
    pub delta_max_unpartitioned_deg: T,
    /// Longest stay in hybrid mode before relinearization, in seconds.
    pub t_th_max: T,
    /// Reference machine for angle deviations; defaults to the external
    /// machine with the smallest column norm.
    pub reference_gen: Option<GenId>,
}

impl<T: Float> Default for SwitchingConfig<T> {
    fn default() -> Self {
        Self {
            delta_max_deg: T::of(67.0),
            delta_max_unpartitioned_deg: T::of(6.0),
            t_th_max: T::of(1.0),
            reference_gen: None,
        }
    }
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    /// Disturbance to apply; `None` runs the system undisturbed.
    pub fault: Option<FaultSpec<T>>,
    /// Total simulated time in seconds.
    pub duration: T,
    /// Integration step in seconds.
    pub step: T,
    pub policy: Policy,
    pub switching: SwitchingConfig<T>,
    /// Error-bound tolerance for balanced truncation of the external area.
    pub reduction_tol: T,
    /// Column-norm threshold deciding which machines stay nonlinear.
    pub threshold: crate::hybrid::ThresholdSpec<T>,
}

impl<T: Float> SimConfig<T> {
    /// Standard settings: 16 s horizon at 10 ms steps, 67 and 6 degree
    /// switching limits, 1 s relinearization patience, 1 p.u. norm
    /// threshold.
    pub fn new(fault: FaultSpec<T>, policy: Policy) -> Self {
        Self {
            fault: Some(fault),
            duration: T::of(16.0),
            step: T::of(0.01),
            policy,
            switching: SwitchingConfig::default(),
            reduction_tol: T::of(1e-4),
            threshold: crate::hybrid::ThresholdSpec::PerUnit(T::one()),
        }
    }

    /// Standard settings with no disturbance applied.
    pub fn no_fault(policy: Policy) -> Self {
        let mut cfg = Self::new(
            FaultSpec {
                bus: BusId(0),
                t_on: T::zero(),
                t_clear: T::one(),
                post_action: PostFaultAction::None,
            },
            policy,
        );
        cfg.fault = None;
        cfg
    }
}

/// Mutable state of the adaptive switching logic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchState<T> {
    pub mode: Mode,
    /// Angle deviation limit in radians.
    pub delta_max: T,
    /// Accumulated continuous time spent in hybrid mode, in seconds.
    pub t_th: T,
    /// Hybrid-mode patience in seconds.
    pub t_th_max: T,
    pub reference_gen: GenId,
}

/// One decision of the switching logic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchDecision<T> {
    pub state: SwitchState<T>,
    /// The hybrid model has been in use long enough that it should be
    /// relinearized at the current state.
    pub relinearize: bool,
}

/// Advances the switching logic by one step of length `h`.
///
/// While a fault is active the full model is mandatory. Otherwise the
/// deviation decides: above the limit the hybrid model runs and its age
/// counter grows; at or below the limit the linear model runs and the
/// counter resets.
pub fn switch_mode<T: Float>(
    sw: &SwitchState<T>,
    fault_active: bool,
    delta_dev: T,
    h: T,
) -> SwitchDecision<T> {
    let mut next = *sw;
    if fault_active {
        next.mode = Mode::Full;
        return SwitchDecision {
            state: next,
            relinearize: false,
        };
    }
    if delta_dev > sw.delta_max {
        next.mode = Mode::Hybrid;
        next.t_th = sw.t_th + h;
        let relinearize = next.t_th > next.t_th_max;
        SwitchDecision {
            state: next,
            relinearize,
        }
    } else {
        next.mode = Mode::Linear;
        next.t_th = T::zero();
        SwitchDecision {
            state: next,
            relinearize: false,
        }
    }
}

/// One classical fourth-order Runge-Kutta step of size `h`.
///
/// Fails with the supplied step index if the result is not finite.
pub fn step_rk4<T: Float>(
    mut f: impl FnMut(&DVector<T>) -> DVector<T>,
    x: &DVector<T>,
    h: T,
    step_no: usize,
) -> Result<DVector<T>> {
    let half = h * T::of(0.5);
    let k1 = f(x);
    let k2 = f(&(x + &k1 * half));
    let k3 = f(&(x + &k2 * half));
    let k4 = f(&(x + &k3 * h));
    let sixth = h / T::of(6.0);
    let next = x + (k1 + k2 * T::of(2.0) + k3 * T::of(2.0) + k4) * sixth;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(step_no));
    }
    Ok(next)
}

/// A simulated trajectory of the whole system.
///
/// `states` holds one row per sample over the global machine-major state
/// layout. `mode_log[k]` is the mode used to advance into sample `k`;
/// entry 0 repeats the initial mode.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    /// Sample times in seconds.
    pub times: Vec<T>,
    /// Sampled states, one row per time.
    pub states: DMatrix<T>,
    /// Machine ids in column-block order.
    pub gen_ids: Vec<GenId>,
    pub mode_log: Vec<Mode>,
    /// Times at which the models were relinearized.
    pub relinearizations: Vec<T>,
    /// Times at which a relinearization attempt was rejected because the
    /// new state matrix was not Hurwitz.
    pub relin_failures: Vec<T>,
    /// Projection round-trip residual recorded at every representation
    /// switch, as `(time, residual)`.
    pub switch_defects: Vec<(T, T)>,
    /// Earliest time at which the run was declared unstable, if any.
    pub unstable_at: Option<T>,
}

impl<T: Float> Trajectory<T> {
    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// Whether any samples are stored.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State value of machine `gen` (by position), field `field`, at sample
    /// `k`.
    pub fn value(&self, k: usize, gen: usize, field: usize) -> T {
        self.states[(k, gen * PER_MACHINE + field)]
    }

    /// Rotor angle of machine `gen` at sample `k`, in radians.
    pub fn delta(&self, k: usize, gen: usize) -> T {
        self.value(k, gen, DELTA)
    }

    /// Rotor speed of machine `gen` at sample `k`, in per unit.
    pub fn omega(&self, k: usize, gen: usize) -> T {
        self.value(k, gen, OMEGA)
    }

    /// Whether the run completed without an instability verdict.
    pub fn stable(&self) -> bool {
        self.unstable_at.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_matches_exponential_decay() {
        // x' = -x over one step of 0.01 reproduces exp(-0.01) to O(h^5).
        let x0 = DVector::from_vec(vec![1.0]);
        let next = step_rk4(|x| -x.clone(), &x0, 0.01, 0).unwrap();
        assert_relative_eq!(next[0], (-0.01_f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn rk4_is_exact_on_cubics() {
        // x'(t) = 3 t^2 integrated exactly by RK4; track t as a state.
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        let f = |x: &DVector<f64>| DVector::from_vec(vec![3.0 * x[1] * x[1], 1.0]);
        let next = step_rk4(f, &x0, 0.5, 0).unwrap();
        assert_relative_eq!(next[0], 0.125, epsilon = 1e-14);
        assert_relative_eq!(next[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rk4_reports_non_finite() {
        let x0 = DVector::from_vec(vec![1.0]);
        let res = step_rk4(|x| x * f64::INFINITY, &x0, 0.01, 7);
        match res {
            Err(Error::NonFinite(step)) => assert_eq!(step, 7),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn switching_follows_fault_and_deviation() {
        let sw = SwitchState {
            mode: Mode::Linear,
            delta_max: 1.0,
            t_th: 0.0,
            t_th_max: 0.05,
            reference_gen: GenId(1),
        };
        // Fault forces full mode regardless of deviation.
        let d = switch_mode(&sw, true, 10.0, 0.01);
        assert_eq!(d.state.mode, Mode::Full);
        assert!(!d.relinearize);
        // Large deviation moves to hybrid and ages the model.
        let d = switch_mode(&sw, false, 1.5, 0.01);
        assert_eq!(d.state.mode, Mode::Hybrid);
        assert_relative_eq!(d.state.t_th, 0.01);
        assert!(!d.relinearize);
        // Staying in hybrid past the patience asks for relinearization.
        let mut s = sw;
        let mut relin = false;
        for _ in 0..6 {
            let d = switch_mode(&s, false, 1.5, 0.01);
            s = d.state;
            relin = d.relinearize;
        }
        assert!(relin);
        // Small deviation returns to linear and resets the age.
        let d = switch_mode(&s, false, 0.5, 0.01);
        assert_eq!(d.state.mode, Mode::Linear);
        assert_eq!(d.state.t_th, 0.0);
        // Deviation exactly at the limit stays linear.
        let d = switch_mode(&sw, false, 1.0, 0.01);
        assert_eq!(d.state.mode, Mode::Linear);
    }
}
