//! Study orchestration: accuracy metrics, critical-clearing-time search,
//! norm-threshold sweeps, scenario execution with timing, and artifact
//! emission (report JSON, trajectory CSV, mode sidecars, gnuplot data).
//!
//! Reports use plain `f64` regardless of the simulation scalar so they
//! serialize identically everywhere.

use crate::dynamics::state_index::{DELTA, OMEGA, PER_MACHINE};
use crate::error::{Error, Result};
use crate::hybrid::ThresholdSpec;
use crate::netmodel::{BranchId, BusId, BusNetwork, GenId};
use crate::scalar::{to_degrees, Float};
use crate::simulate::{
    Engine, FaultSpec, Policy, PostFaultAction, SimConfig, SwitchingConfig, Trajectory,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Grid resolution of the critical-clearing-time search, in seconds.
pub const CCT_RESOLUTION: f64 = 0.01;

/// Root-mean-square difference of one state column between two trajectories
/// on identical time grids, including the initial sample.
pub fn rmse_series<T: Float>(
    reference: &Trajectory<T>,
    test: &Trajectory<T>,
    column: usize,
) -> Result<T> {
    same_grid(reference, test)?;
    if column >= reference.states.ncols() {
        return Err(Error::Dimension(format!(
            "state column {column} out of range for {} columns",
            reference.states.ncols()
        )));
    }
    let n = reference.len();
    let mut acc = T::zero();
    for k in 0..n {
        let d = reference.states[(k, column)] - test.states[(k, column)];
        acc += d * d;
    }
    Ok((acc / T::of(n as f64)).sqrt())
}

fn same_grid<T: Float>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<()> {
    if a.len() != b.len() || a.times.iter().zip(&b.times).any(|(x, y)| x != y) {
        return Err(Error::Dimension(format!(
            "time grids differ: {} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.gen_ids != b.gen_ids {
        return Err(Error::Dimension("machine orders differ".into()));
    }
    Ok(())
}

/// Per-machine, per-state RMSE between two trajectories. Rotor angles are
/// reported in degrees, every other state in per unit.
#[derive(Debug, Clone)]
pub struct RmseTable<T> {
    pub gen_ids: Vec<GenId>,
    /// One row per machine, one column per state field.
    pub values: DMatrix<T>,
}

impl<T: Float> RmseTable<T> {
    /// RMSE of machine `gen` (by position) for state `field`.
    pub fn value(&self, gen: usize, field: usize) -> T {
        self.values[(gen, field)]
    }

    /// Machine with the largest rotor-angle RMSE and that RMSE in degrees.
    pub fn worst_generator(&self) -> (GenId, T) {
        let mut best = (self.gen_ids[0], self.values[(0, DELTA)]);
        for g in 1..self.gen_ids.len() {
            if self.values[(g, DELTA)] > best.1 {
                best = (self.gen_ids[g], self.values[(g, DELTA)]);
            }
        }
        best
    }
}

/// Builds the full RMSE table; requires identical grids.
pub fn rmse_table<T: Float>(
    reference: &Trajectory<T>,
    test: &Trajectory<T>,
) -> Result<RmseTable<T>> {
    same_grid(reference, test)?;
    let ng = reference.gen_ids.len();
    let mut values = DMatrix::zeros(ng, PER_MACHINE);
    for g in 0..ng {
        for f in 0..PER_MACHINE {
            let raw = rmse_series(reference, test, g * PER_MACHINE + f)?;
            values[(g, f)] = if f == DELTA { to_degrees(raw) } else { raw };
        }
    }
    Ok(RmseTable {
        gen_ids: reference.gen_ids.clone(),
        values,
    })
}

/// Clone of the first `len` samples of a trajectory; event lists are
/// filtered to the retained window.
pub fn truncated<T: Float>(traj: &Trajectory<T>, len: usize) -> Trajectory<T> {
    let len = len.min(traj.len());
    let t_end = if len == 0 { T::zero() } else { traj.times[len - 1] };
    let keep = |v: &[T]| v.iter().copied().filter(|t| *t <= t_end).collect::<Vec<_>>();
    Trajectory {
        times: traj.times[..len].to_vec(),
        states: traj.states.rows(0, len).into_owned(),
        gen_ids: traj.gen_ids.clone(),
        mode_log: traj.mode_log[..len].to_vec(),
        relinearizations: keep(&traj.relinearizations),
        relin_failures: keep(&traj.relin_failures),
        switch_defects: traj
            .switch_defects
            .iter()
            .copied()
            .filter(|(t, _)| *t <= t_end)
            .collect(),
        unstable_at: traj.unstable_at.filter(|t| *t <= t_end),
    }
}

/// RMSE table over the common prefix of two runs, for comparisons where one
/// run may have terminated early on an instability verdict.
pub fn rmse_table_common<T: Float>(
    reference: &Trajectory<T>,
    test: &Trajectory<T>,
) -> Result<RmseTable<T>> {
    let len = reference.len().min(test.len());
    rmse_table(&truncated(reference, len), &truncated(test, len))
}

/// Largest clearing duration (seconds after fault application) that leaves
/// the system stable, located by bisection on a 10 ms grid.
///
/// The bracket gives clearing durations: the lower end must be stable and
/// the upper end unstable under `cfg`'s policy. Duration zero means the
/// fault is never applied and counts as stable.
pub fn find_cct<T: Float>(
    net: &BusNetwork<T>,
    cfg: &SimConfig<T>,
    bracket: (T, T),
) -> Result<T> {
    let res = T::of(CCT_RESOLUTION);
    let to_grid = |d: T| -> usize { (d / res).to_f64_lossy().round().max(0.0) as usize };
    let (mut lo, mut hi) = (to_grid(bracket.0), to_grid(bracket.1));
    if lo >= hi {
        return Err(Error::Bracket(format!(
            "bracket [{}, {}] is empty on the {CCT_RESOLUTION} s grid",
            bracket.0, bracket.1
        )));
    }
    let fault = cfg
        .fault
        .ok_or_else(|| Error::Scenario("critical clearing search needs a fault".into()))?;
    let horizon = fault.t_on + res * T::of(hi as f64);
    if horizon >= cfg.duration {
        return Err(Error::Bracket(
            "bracket upper end reaches past the simulation horizon".into(),
        ));
    }
    let mut verdicts: Vec<(usize, bool)> = Vec::new();
    let mut stable_at = |k: usize| -> Result<bool> {
        if k == 0 {
            return Ok(true);
        }
        if let Some(&(_, s)) = verdicts.iter().find(|(kk, _)| *kk == k) {
            return Ok(s);
        }
        let mut c = cfg.clone();
        let mut f = fault;
        f.t_clear = f.t_on + res * T::of(k as f64);
        c.fault = Some(f);
        let stable = Engine::new(net, c)?.run()?.stable();
        verdicts.push((k, stable));
        Ok(stable)
    };
    if !stable_at(lo)? {
        return Err(Error::Bracket(format!(
            "lower bracket end {} s is already unstable",
            bracket.0
        )));
    }
    if stable_at(hi)? {
        return Err(Error::Bracket(format!(
            "upper bracket end {} s is still stable",
            bracket.1
        )));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if stable_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(res * T::of(lo as f64))
}

/// Outcome of a descending norm-threshold sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome<T> {
    /// Chosen threshold in per unit: the largest one meeting the limit, or
    /// the best achieved when none does.
    pub threshold_pu: T,
    /// Worst rotor-angle RMSE in degrees at the chosen threshold.
    pub worst_error_deg: T,
    /// Whether the error limit was met.
    pub met_limit: bool,
    /// Every tried `(threshold, worst error)` pair, in sweep order.
    pub trace: Vec<(T, T)>,
}

/// Decreases the column-norm threshold from `start_pu` in `step_pu`
/// decrements until the worst rotor-angle RMSE against the full reference,
/// over every fault and machine, is below `limit_deg`.
///
/// Thresholds that produce a machine selection already evaluated reuse its
/// error. An unstable adaptive run counts as an infinite error.
pub fn threshold_sweep<T: Float>(
    net: &BusNetwork<T>,
    base: &SimConfig<T>,
    faults: &[FaultSpec<T>],
    policy: Policy,
    start_pu: T,
    step_pu: T,
    limit_deg: T,
) -> Result<SweepOutcome<T>> {
    if faults.is_empty() {
        return Err(Error::Validation("threshold sweep needs at least one fault".into()));
    }
    if !matches!(policy, Policy::AdaptivePartitioned | Policy::AdaptiveUnpartitioned) {
        return Err(Error::Scenario(format!(
            "threshold sweep applies to adaptive policies, not {policy}"
        )));
    }
    if step_pu <= T::zero() || start_pu <= T::zero() {
        return Err(Error::Validation("sweep start and step must be positive".into()));
    }

    // Full-detail references, one per fault.
    let mut refs = Vec::with_capacity(faults.len());
    for fault in faults {
        let mut c = base.clone();
        c.fault = Some(*fault);
        c.policy = Policy::FullOnly;
        refs.push(Engine::new(net, c)?.run()?);
    }

    // The probe run exposes the column norms that decide selections.
    let probe = {
        let mut c = base.clone();
        c.fault = Some(faults[0]);
        c.policy = policy;
        Engine::new(net, c)?
    };
    let norms: Vec<(GenId, T)> = match probe.part.as_ref() {
        Some(p) => p
            .eq_ext_gen_ids()
            .iter()
            .zip(p.norms.iter())
            .map(|(g, n)| (*g, *n))
            .collect(),
        None => Vec::new(),
    };
    let selection_of = |threshold: T| -> BTreeSet<GenId> {
        norms
            .iter()
            .filter(|(_, n)| *n >= threshold)
            .map(|(g, _)| *g)
            .collect()
    };

    let worst_for = |threshold: T| -> Result<T> {
        let mut worst = T::zero();
        for (fault, reference) in faults.iter().zip(&refs) {
            let mut c = base.clone();
            c.fault = Some(*fault);
            c.policy = policy;
            c.threshold = ThresholdSpec::PerUnit(threshold);
            let traj = Engine::new(net, c)?.run()?;
            if !traj.stable() {
                return Ok(T::of(f64::INFINITY));
            }
            let table = rmse_table_common(reference, &traj)?;
            let (_, err) = table.worst_generator();
            if err > worst {
                worst = err;
            }
        }
        Ok(worst)
    };

    let mut cache: Vec<(BTreeSet<GenId>, T)> = Vec::new();
    let mut trace = Vec::new();
    let mut best: Option<(T, T)> = None;
    let mut theta = start_pu;
    while theta > T::zero() {
        let sel = selection_of(theta);
        let err = match cache.iter().find(|(s, _)| *s == sel) {
            Some((_, e)) => *e,
            None => {
                let e = worst_for(theta)?;
                cache.push((sel, e));
                e
            }
        };
        trace.push((theta, err));
        if best.map_or(true, |(_, be)| err < be) {
            best = Some((theta, err));
        }
        if err < limit_deg {
            return Ok(SweepOutcome {
                threshold_pu: theta,
                worst_error_deg: err,
                met_limit: true,
                trace,
            });
        }
        theta -= step_pu;
    }
    let (threshold_pu, worst_error_deg) = best.expect("at least one threshold tried");
    Ok(SweepOutcome {
        threshold_pu,
        worst_error_deg,
        met_limit: false,
        trace,
    })
}

/// Median of timing samples; the slice is sorted in place.
pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Runs one policy `runs` times on a prebuilt engine, timing integration
/// only, and returns the median seconds, the raw samples, and the last
/// trajectory.
pub fn time_policy<T: Float>(
    engine: &Engine<T>,
    policy: Policy,
    runs: usize,
) -> Result<(f64, Vec<f64>, Trajectory<T>)> {
    assert!(runs >= 1, "at least one timing run");
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let start = Instant::now();
        let traj = engine.run_policy(policy)?;
        samples.push(start.elapsed().as_secs_f64());
        last = Some(traj);
    }
    let mut sorted = samples.clone();
    let med = median(&mut sorted);
    Ok((med, samples, last.expect("at least one run")))
}

/// Scenario description as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub id: String,
    #[serde(default = "default_policies")]
    pub policies: Vec<Policy>,
    pub fault: FaultDto,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub switching: SwitchingDto,
    #[serde(default = "default_reduction_tol")]
    pub reduction_tol: f64,
    #[serde(default)]
    pub threshold: ThresholdDto,
    /// Timing samples per policy; the report carries their median.
    #[serde(default = "default_timing_runs")]
    pub timing_runs: usize,
}

fn default_policies() -> Vec<Policy> {
    Policy::ALL.to_vec()
}
fn default_duration() -> f64 {
    16.0
}
fn default_step() -> f64 {
    0.01
}
fn default_reduction_tol() -> f64 {
    1e-4
}
fn default_timing_runs() -> usize {
    5
}

/// Fault description as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultDto {
    pub bus: u32,
    pub t_on: f64,
    pub t_clear: f64,
    #[serde(default)]
    pub post_action: PostActionDto,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PostActionDto {
    #[default]
    None,
    TripLine(u32),
    TripBus,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SwitchingDto {
    pub delta_max_deg: f64,
    pub delta_max_unpartitioned_deg: f64,
    pub t_th_max: f64,
    pub reference_gen: Option<u32>,
}

impl Default for SwitchingDto {
    fn default() -> Self {
        Self {
            delta_max_deg: 67.0,
            delta_max_unpartitioned_deg: 6.0,
            t_th_max: 1.0,
            reference_gen: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdDto {
    PerUnit(f64),
    Siemens(f64),
}

impl Default for ThresholdDto {
    fn default() -> Self {
        ThresholdDto::PerUnit(1.0)
    }
}

impl FaultDto {
    pub fn to_spec<T: Float>(&self) -> FaultSpec<T> {
        FaultSpec {
            bus: BusId(self.bus),
            t_on: T::of(self.t_on),
            t_clear: T::of(self.t_clear),
            post_action: match self.post_action {
                PostActionDto::None => PostFaultAction::None,
                PostActionDto::TripLine(id) => PostFaultAction::TripLine(BranchId(id)),
                PostActionDto::TripBus => PostFaultAction::TripBus,
            },
        }
    }
}

impl ScenarioFile {
    /// Reads a scenario description from JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Simulation configuration for one policy.
    pub fn to_config<T: Float>(&self, policy: Policy) -> SimConfig<T> {
        SimConfig {
            fault: Some(self.fault.to_spec()),
            duration: T::of(self.duration),
            step: T::of(self.step),
            policy,
            switching: SwitchingConfig {
                delta_max_deg: T::of(self.switching.delta_max_deg),
                delta_max_unpartitioned_deg: T::of(self.switching.delta_max_unpartitioned_deg),
                t_th_max: T::of(self.switching.t_th_max),
                reference_gen: self.switching.reference_gen.map(GenId),
            },
            reduction_tol: T::of(self.reduction_tol),
            threshold: match self.threshold {
                ThresholdDto::PerUnit(v) => ThresholdSpec::PerUnit(T::of(v)),
                ThresholdDto::Siemens(v) => ThresholdSpec::Siemens(T::of(v)),
            },
        }
    }
}

/// Results of one policy within a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: Policy,
    /// Per-machine, per-state RMSE against the full reference; rotor angles
    /// in degrees, everything else in per unit. Row order follows
    /// `ScenarioReport::gen_ids`.
    pub rmse: Vec<Vec<f64>>,
    pub worst_generator: u32,
    pub worst_delta_rmse_deg: f64,
    pub seconds_median: f64,
    pub seconds_samples: Vec<f64>,
    /// `t_full / t_policy` on the same machine and run.
    pub speedup_vs_full: f64,
    pub relinearizations: usize,
    pub relin_failures: usize,
    pub unstable_at: Option<f64>,
}

/// Everything a scenario run produces, minus the trajectory files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub gen_ids: Vec<u32>,
    pub policies: Vec<PolicyReport>,
}

/// Mode and event sidecar stored next to each trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSidecar {
    pub times: Vec<f64>,
    pub mode_log: Vec<crate::simulate::Mode>,
    pub relinearizations: Vec<f64>,
    pub relin_failures: Vec<f64>,
    pub switch_defects: Vec<(f64, f64)>,
    pub unstable_at: Option<f64>,
}

impl ModeSidecar {
    pub fn from_trajectory<T: Float>(traj: &Trajectory<T>) -> Self {
        let f = T::to_f64_lossy;
        Self {
            times: traj.times.iter().map(|t| f(*t)).collect(),
            mode_log: traj.mode_log.clone(),
            relinearizations: traj.relinearizations.iter().map(|t| f(*t)).collect(),
            relin_failures: traj.relin_failures.iter().map(|t| f(*t)).collect(),
            switch_defects: traj
                .switch_defects
                .iter()
                .map(|(t, d)| (f(*t), f(*d)))
                .collect(),
            unstable_at: traj.unstable_at.map(f),
        }
    }
}

/// Writes `time,gen<id>_delta,gen<id>_omega,...` rows; angles in degrees,
/// speeds in per unit.
pub fn write_trajectory_csv<T: Float, W: Write>(w: &mut W, traj: &Trajectory<T>) -> Result<()> {
    write!(w, "time")?;
    for id in &traj.gen_ids {
        write!(w, ",gen{id}_delta,gen{id}_omega")?;
    }
    writeln!(w)?;
    for k in 0..traj.len() {
        write!(w, "{}", traj.times[k].to_f64_lossy())?;
        for g in 0..traj.gen_ids.len() {
            let delta = to_degrees(traj.value(k, g, DELTA)).to_f64_lossy();
            let omega = traj.value(k, g, OMEGA).to_f64_lossy();
            write!(w, ",{delta},{omega}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes gnuplot-friendly rotor-angle data: one indexed block per labelled
/// trajectory with `time angle_deg` rows for the given machine position.
pub fn write_angle_blocks<T: Float, W: Write>(
    w: &mut W,
    entries: &[(String, &Trajectory<T>, usize)],
) -> Result<()> {
    for (label, traj, gen) in entries {
        writeln!(w, "# {label}")?;
        for k in 0..traj.len() {
            writeln!(
                w,
                "{} {}",
                traj.times[k].to_f64_lossy(),
                to_degrees(traj.value(k, *gen, DELTA)).to_f64_lossy()
            )?;
        }
        writeln!(w)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Executes a scenario: runs every requested policy with timing, measures
/// accuracy against a full-detail reference, and optionally writes the
/// trajectory CSVs, mode sidecars, angle data file, and report JSON into
/// `out_dir`. Timing excludes model construction and file output.
pub fn run_scenario<T: Float>(
    net: &BusNetwork<T>,
    scenario: &ScenarioFile,
    out_dir: Option<&Path>,
) -> Result<ScenarioReport> {
    let mut policies: Vec<Policy> = Vec::new();
    for p in &scenario.policies {
        if !policies.contains(p) {
            policies.push(*p);
        }
    }
    if policies.is_empty() {
        return Err(Error::Scenario(format!(
            "scenario '{}' requests no policies",
            scenario.id
        )));
    }
    let engine = Engine::new(net, scenario.to_config::<T>(Policy::FullOnly))?;
    let runs = scenario.timing_runs.max(1);

    // The full-detail run is always executed: it is the accuracy reference
    // and the timing baseline.
    let (t_full, full_samples, reference) = time_policy(&engine, Policy::FullOnly, runs)?;

    let mut reports = Vec::new();
    let mut trajectories: Vec<(Policy, Trajectory<T>)> = Vec::new();
    for &policy in &policies {
        let (med, samples, traj) = if policy == Policy::FullOnly {
            (t_full, full_samples.clone(), reference.clone())
        } else {
            time_policy(&engine, policy, runs)?
        };
        let table = rmse_table_common(&reference, &traj)?;
        let (worst_gen, worst_deg) = table.worst_generator();
        reports.push(PolicyReport {
            policy,
            rmse: (0..table.gen_ids.len())
                .map(|g| {
                    (0..PER_MACHINE)
                        .map(|f| table.value(g, f).to_f64_lossy())
                        .collect()
                })
                .collect(),
            worst_generator: worst_gen.0,
            worst_delta_rmse_deg: worst_deg.to_f64_lossy(),
            seconds_median: med,
            seconds_samples: samples,
            speedup_vs_full: t_full / med,
            relinearizations: traj.relinearizations.len(),
            relin_failures: traj.relin_failures.len(),
            unstable_at: traj.unstable_at.map(T::to_f64_lossy),
        });
        trajectories.push((policy, traj));
    }

    let report = ScenarioReport {
        scenario: scenario.id.clone(),
        gen_ids: engine.gen_ids().iter().map(|g| g.0).collect(),
        policies: reports,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        // The machine compared in the angle plot: worst over the
        // non-reference policies, or the first machine when only the
        // reference ran.
        let worst_pos = report
            .policies
            .iter()
            .filter(|p| p.policy != Policy::FullOnly)
            .max_by(|a, b| a.worst_delta_rmse_deg.total_cmp(&b.worst_delta_rmse_deg))
            .and_then(|p| report.gen_ids.iter().position(|g| *g == p.worst_generator))
            .unwrap_or(0);
        let mut blocks = Vec::new();
        for (policy, traj) in &trajectories {
            let base = dir.join(format!("{}_{policy}", scenario.id));
            let mut csv = std::fs::File::create(base.with_extension("csv"))?;
            write_trajectory_csv(&mut csv, traj)?;
            let sidecar = ModeSidecar::from_trajectory(traj);
            let json = serde_json::to_string_pretty(&sidecar)?;
            std::fs::write(base.with_extension("modes.json"), json + "\n")?;
            blocks.push((policy.to_string(), traj, worst_pos));
        }
        let entries: Vec<(String, &Trajectory<T>, usize)> = blocks
            .iter()
            .map(|(l, t, g)| (l.clone(), *t, *g))
            .collect();
        let mut dat = std::fs::File::create(dir.join(format!("{}_angles.dat", scenario.id)))?;
        write_angle_blocks(&mut dat, &entries)?;
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(dir.join(format!("{}_report.json", scenario.id)), json + "\n")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Mode;

    fn flat_trajectory(times: Vec<f64>, ng: usize, fill: f64) -> Trajectory<f64> {
        let n = times.len();
        Trajectory {
            times,
            states: DMatrix::from_element(n, ng * PER_MACHINE, fill),
            gen_ids: (0..ng as u32).map(GenId).collect(),
            mode_log: vec![Mode::Full; n],
            relinearizations: vec![],
            relin_failures: vec![],
            switch_defects: vec![],
            unstable_at: None,
        }
    }

    #[test]
    fn rmse_of_identical_trajectories_is_zero() {
        let t: Vec<f64> = (0..11).map(|k| 0.01 * k as f64).collect();
        let a = flat_trajectory(t.clone(), 2, 1.25);
        let b = flat_trajectory(t, 2, 1.25);
        assert_eq!(rmse_series(&a, &b, 0).unwrap(), 0.0);
        let table = rmse_table(&a, &b).unwrap();
        assert_eq!(table.values.max(), 0.0);
    }

    #[test]
    fn rmse_of_constant_offset_is_the_offset() {
        let t: Vec<f64> = (0..50).map(|k| 0.01 * k as f64).collect();
        let a = flat_trajectory(t.clone(), 1, 0.0);
        let b = flat_trajectory(t, 1, 1.0);
        for col in 0..PER_MACHINE {
            assert!((rmse_series(&a, &b, col).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rmse_of_sinusoid_over_whole_periods_is_amplitude_over_sqrt2() {
        // 1000 samples over one full period, amplitude 3.
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let mut a = flat_trajectory(times.clone(), 1, 0.0);
        for k in 0..n {
            a.states[(k, OMEGA)] = 3.0 * (2.0 * std::f64::consts::PI * times[k]).sin();
        }
        let b = flat_trajectory(times, 1, 0.0);
        let got = rmse_series(&a, &b, OMEGA).unwrap();
        assert!((got - 3.0 / 2.0_f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn rmse_rejects_grid_mismatch() {
        let a = flat_trajectory((0..5).map(|k| k as f64).collect(), 1, 0.0);
        let b = flat_trajectory((0..6).map(|k| k as f64).collect(), 1, 0.0);
        assert!(rmse_series(&a, &b, 0).is_err());
    }

    #[test]
    fn delta_rmse_is_reported_in_degrees() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let a = flat_trajectory(t.clone(), 1, 0.0);
        let mut b = flat_trajectory(t, 1, 0.0);
        for k in 0..10 {
            b.states[(k, DELTA)] = std::f64::consts::PI / 6.0;
        }
        let table = rmse_table(&a, &b).unwrap();
        assert!((table.value(0, DELTA) - 30.0).abs() < 1e-12);
        let (_, worst) = table.worst_generator();
        assert!((worst - 30.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_keeps_prefix_and_filters_events() {
        let t: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let mut traj = flat_trajectory(t, 1, 2.0);
        traj.relinearizations = vec![0.2, 0.8];
        traj.switch_defects = vec![(0.1, 0.0), (0.7, 0.0)];
        traj.unstable_at = Some(0.9);
        let cut = truncated(&traj, 5);
        assert_eq!(cut.len(), 5);
        assert_eq!(cut.times.last().copied(), Some(0.4));
        assert_eq!(cut.relinearizations, vec![0.2]);
        assert_eq!(cut.switch_defects.len(), 1);
        assert_eq!(cut.unstable_at, None);
    }

    #[test]
    fn median_handles_odd_and_even_counts() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn scenario_file_defaults_apply() {
        let text = r#"{ "id": "s1", "fault": { "bus": 3, "t_on": 1.0, "t_clear": 1.1 } }"#;
        let s: ScenarioFile = serde_json::from_str(text).unwrap();
        assert_eq!(s.policies.len(), 4);
        assert_eq!(s.duration, 16.0);
        assert_eq!(s.step, 0.01);
        assert_eq!(s.timing_runs, 5);
        let cfg: SimConfig<f64> = s.to_config(Policy::FullOnly);
        let fault = cfg.fault.unwrap();
        assert_eq!(fault.bus, BusId(3));
        assert_eq!(fault.post_action, PostFaultAction::None);
        assert_eq!(cfg.switching.delta_max_deg, 67.0);
    }

    #[test]
    fn trajectory_csv_has_expected_header() {
        let t: Vec<f64> = vec![0.0, 0.01];
        let traj = flat_trajectory(t, 2, 0.0);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "time,gen0_delta,gen0_omega,gen1_delta,gen1_omega"
        );
        assert_eq!(lines.clone().count(), 2);
        assert!(lines.next().unwrap().starts_with("0,"));
    }
}
