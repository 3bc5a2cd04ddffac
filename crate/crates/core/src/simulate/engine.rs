//! Scenario assembly and the policy integration loops.
//!
//! An [`Engine`] precomputes everything a scenario needs before time
//! stepping begins: the reduced networks of every topology phase (pre-fault,
//! fault-on, post-fault), the equilibrium, the external-area linearization
//! and balanced truncation, and the hybrid models. Runs then share those
//! immutable models; adaptive runs clone and replace them on
//! relinearization.

use super::{
    switch_mode, step_rk4, Mode, Policy, PostFaultAction, SimConfig, SwitchState, Trajectory,
};
use crate::dynamics::{
    init_equilibrium, rhs_full, state_index::*, BoundaryInput, DynModel, Equilibrium,
};
use crate::error::{Error, Result};
use crate::hybrid::{
    column_norms, rhs_hybrid, rhs_hybrid_unpartitioned, select_functions, FunctionSelection,
    HybridModel,
};
use crate::linearize::LinearModel;
use crate::mor::{reduce_linear, BalancedReduction};
use crate::netmodel::{Area, BusNetwork, GenId, ReducedNetwork, TopologyState};
use crate::scalar::{to_radians, Float};
use crate::sparse::SparseRows;
use nalgebra::DVector;
use num_complex::Complex;
use std::collections::BTreeSet;

/// A reduced network and its ready-to-integrate dynamic model.
#[derive(Debug, Clone)]
pub struct PhaseModel<T> {
    pub rn: ReducedNetwork<T>,
    pub dyn_model: DynModel<T>,
}

impl<T: Float> PhaseModel<T> {
    fn for_area(net: &BusNetwork<T>, area: Area, topo: &TopologyState) -> Result<Self> {
        let rn = ReducedNetwork::for_area(net, area, topo)?;
        let dyn_model = DynModel::new(net, &rn)?;
        Ok(Self { rn, dyn_model })
    }

    fn whole(net: &BusNetwork<T>, topo: &TopologyState) -> Result<Self> {
        let rn = ReducedNetwork::whole_system(net, topo)?;
        let dyn_model = DynModel::new(net, &rn)?;
        Ok(Self { rn, dyn_model })
    }
}

/// Everything specific to the partitioned representation of a scenario.
#[derive(Debug, Clone)]
pub struct PartModels<T> {
    /// Study-area models for the pre-fault, fault-on, and post-fault
    /// topologies.
    pub study: [PhaseModel<T>; 3],
    /// External-area models: nominal and post-fault. The external network
    /// is unaffected by study-side faults, but a post-fault action may trip
    /// an external branch.
    pub external: [PhaseModel<T>; 2],
    pub eq_study: Equilibrium<T>,
    pub eq_ext: Equilibrium<T>,
    /// External dynamics linearized at the pre-fault equilibrium.
    pub lin_ext: LinearModel<T>,
    /// Balanced truncation of `lin_ext`.
    pub red_ext: BalancedReduction<T>,
    /// Hybrid model of the external area at the pre-fault equilibrium.
    pub hyb_ext: HybridModel<T>,
    pub selection: FunctionSelection<T>,
    /// Column norms of the external machines, aligned with the external
    /// machine order.
    pub norms: DVector<T>,
    /// Global machine position of each study machine.
    pub study_global: Vec<usize>,
    /// Global machine position of each external machine.
    pub ext_global: Vec<usize>,
}

/// Precomputed scenario ready to run under any policy.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    pub net: BusNetwork<T>,
    pub cfg: SimConfig<T>,
    /// Whole-system models for the three topology phases.
    pub whole: [PhaseModel<T>; 3],
    pub eq_whole: Equilibrium<T>,
    /// Partitioned models, when the network defines an external area and
    /// the scenario permits partitioning.
    pub part: Option<PartModels<T>>,
    part_error: Option<String>,
    /// Whole-system dynamics linearized at the equilibrium.
    pub lin_whole: LinearModel<T>,
    /// Unpartitioned hybrid model: study machines and strongly coupled
    /// external machines stay nonlinear.
    pub hyb_whole: HybridModel<T>,
    pub nsteps: usize,
    pub k_on: usize,
    pub k_clear: usize,
    pub reference_gen: GenId,
    ref_global: usize,
    measured_global: Vec<usize>,
    baseline: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Pre = 0,
    Fault = 1,
    Post = 2,
}

/// Current external-area models of an adaptive partitioned run; replaced as
/// a whole on relinearization.
#[derive(Clone)]
struct CurrentExt<T> {
    lin: LinearModel<T>,
    red: BalancedReduction<T>,
    hyb: HybridModel<T>,
    /// Reduced offset `T_r f0` of the linear model.
    offset_r: DVector<T>,
}

impl<T: Float> CurrentExt<T> {
    fn new(lin: LinearModel<T>, red: BalancedReduction<T>, hyb: HybridModel<T>) -> Self {
        let offset_r = red.t_r() * &lin.f0;
        Self {
            lin,
            red,
            hyb,
            offset_r,
        }
    }

    /// Linear-mode reduced dynamics `a_r x_r + b_r du + T_r f0`.
    fn linear_rhs(&self, xr: &DVector<T>, du: &DVector<T>) -> DVector<T> {
        &self.red.a_r * xr + &self.red.b_r * du + &self.offset_r
    }
}

/// Integration state of a partitioned run.
enum PartRepr<T> {
    Mono(DVector<T>),
    Split {
        xs: DVector<T>,
        xr: DVector<T>,
        us: BoundaryInput<T>,
        ue: BoundaryInput<T>,
    },
}

struct Recorder<T> {
    times: Vec<T>,
    rows: Vec<DVector<T>>,
    mode_log: Vec<Mode>,
    relinearizations: Vec<T>,
    relin_failures: Vec<T>,
    switch_defects: Vec<(T, T)>,
    unstable_at: Option<T>,
}

impl<T: Float> Recorder<T> {
    fn new(capacity: usize) -> Self {
        Self {
            times: Vec::with_capacity(capacity),
            rows: Vec::with_capacity(capacity),
            mode_log: Vec::with_capacity(capacity),
            relinearizations: Vec::new(),
            relin_failures: Vec::new(),
            switch_defects: Vec::new(),
            unstable_at: None,
        }
    }

    /// Stores a sample; returns false once the run is unstable.
    fn push(&mut self, t: T, row: DVector<T>, mode: Mode) -> bool {
        let half = T::of(0.5);
        for g in 0..row.len() / PER_MACHINE {
            let w = row[g * PER_MACHINE + OMEGA];
            if !w.is_finite() || (w - T::one()).abs() > half {
                self.unstable_at.get_or_insert(t);
            }
        }
        self.times.push(t);
        self.rows.push(row);
        self.mode_log.push(mode);
        self.unstable_at.is_none()
    }

    fn blowup(&mut self, t: T) {
        self.unstable_at.get_or_insert(t);
    }

    fn finish(self, gen_ids: Vec<GenId>) -> Trajectory<T> {
        let ncols = gen_ids.len() * PER_MACHINE;
        let mut states = nalgebra::DMatrix::zeros(self.rows.len(), ncols);
        for (k, row) in self.rows.iter().enumerate() {
            states.row_mut(k).copy_from(&row.transpose());
        }
        Trajectory {
            times: self.times,
            states,
            gen_ids,
            mode_log: self.mode_log,
            relinearizations: self.relinearizations,
            relin_failures: self.relin_failures,
            switch_defects: self.switch_defects,
            unstable_at: self.unstable_at,
        }
    }
}

impl<T: Float> Engine<T> {
    /// Precomputes every model a scenario needs.
    pub fn new(net: &BusNetwork<T>, cfg: SimConfig<T>) -> Result<Self> {
        net.validate()?;
        let h = cfg.step;
        if h <= T::zero() || cfg.duration <= T::zero() {
            return Err(Error::Scenario("step and duration must be positive".into()));
        }
        let to_steps = |t: T| -> usize {
            let v = (t / h).to_f64_lossy();
            v.round().max(0.0) as usize
        };
        let nsteps = to_steps(cfg.duration);
        let topo_pre = TopologyState::nominal();
        let (k_on, k_clear, topo_fault, topo_post) = match &cfg.fault {
            None => (nsteps + 1, nsteps + 1, TopologyState::nominal(), TopologyState::nominal()),
            Some(fault) => {
                let k_on = to_steps(fault.t_on);
                let k_clear = to_steps(fault.t_clear);
                if !(k_on < k_clear && k_clear <= nsteps) {
                    return Err(Error::Scenario(
                        "fault must satisfy 0 <= t_on < t_clear <= duration on the step grid"
                            .into(),
                    ));
                }
                if net.bus(fault.bus).is_none() {
                    return Err(Error::Scenario(format!("unknown fault bus {}", fault.bus)));
                }
                let topo_fault = TopologyState::faulted(fault.bus);
                let mut topo_post = TopologyState::nominal();
                match fault.post_action {
                    PostFaultAction::None => {}
                    PostFaultAction::TripLine(id) => {
                        let br = net
                            .branch(id)
                            .ok_or_else(|| Error::Scenario(format!("unknown branch {id} to trip")))?;
                        if !br.in_service {
                            return Err(Error::Scenario(format!(
                                "branch {id} is already out of service"
                            )));
                        }
                        topo_post.removed_branches.insert(id);
                    }
                    PostFaultAction::TripBus => {
                        for br in &net.branches {
                            if br.in_service
                                && (br.from_bus == fault.bus || br.to_bus == fault.bus)
                            {
                                topo_post.removed_branches.insert(br.id);
                            }
                        }
                    }
                }
                (k_on, k_clear, topo_fault, topo_post)
            }
        };

        let whole = [
            PhaseModel::whole(net, &topo_pre)?,
            PhaseModel::whole(net, &topo_fault)?,
            PhaseModel::whole(net, &topo_post)?,
        ];
        let eq_whole = init_equilibrium(net, &whole[0].rn)?;

        let threshold_pu = cfg.threshold.resolve(net.base_mva)?;
        let (part, part_error) = if net.partition.has_external() {
            match Self::build_part(net, &cfg, &whole, &topo_pre, &topo_fault, &topo_post, threshold_pu)
            {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, Some("the network does not define an external area".into()))
        };

        // Unpartitioned nonlinear-function selection: study machines are
        // always kept; external machines follow the same column norms as in
        // the partitioned system.
        let global_ids = whole[0].rn.ym.gen_order.clone();
        let mut norms_global = DVector::zeros(global_ids.len());
        let mut always: BTreeSet<GenId> = BTreeSet::new();
        if let Some(p) = &part {
            for (k, &g) in p.ext_global.iter().enumerate() {
                norms_global[g] = p.norms[k];
            }
            always.extend(net.partition.study_generators.iter().copied());
        } else {
            always.extend(global_ids.iter().copied());
        }
        let selection_whole = select_functions(&norms_global, &global_ids, threshold_pu, &always)?;
        let x_eq = eq_whole.state.to_vector();
        let lin_whole = LinearModel::at(&whole[0].dyn_model, &x_eq, &eq_whole.inputs);
        let hyb_whole = HybridModel::unpartitioned(&lin_whole, selection_whole)?;

        let reference_gen = match cfg.switching.reference_gen {
            Some(g) => {
                if net.gen_index(g).is_none() {
                    return Err(Error::Scenario(format!("unknown reference generator {g}")));
                }
                g
            }
            None => match &part {
                Some(p) => {
                    // External machine with the weakest boundary coupling;
                    // ties resolved toward the lowest id.
                    let mut best: Option<(T, GenId)> = None;
                    for (k, id) in p.eq_ext_gen_ids().iter().enumerate() {
                        let cand = (p.norms[k], *id);
                        best = Some(match best {
                            None => cand,
                            Some(b) => {
                                if cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1) {
                                    cand
                                } else {
                                    b
                                }
                            }
                        });
                    }
                    best.map(|b| b.1).expect("external area has generators")
                }
                None => *global_ids.iter().min().expect("network has generators"),
            },
        };
        let ref_global = global_ids
            .iter()
            .position(|g| *g == reference_gen)
            .expect("reference generator exists");
        let measured_global: Vec<usize> = match &part {
            Some(p) => p.study_global.clone(),
            None => (0..global_ids.len()).collect(),
        };
        let dref0 = x_eq[ref_global * PER_MACHINE + DELTA];
        let baseline = measured_global
            .iter()
            .map(|&g| x_eq[g * PER_MACHINE + DELTA] - dref0)
            .collect();

        Ok(Self {
            net: net.clone(),
            cfg,
            whole,
            eq_whole,
            part,
            part_error,
            lin_whole,
            hyb_whole,
            nsteps,
            k_on,
            k_clear,
            reference_gen,
            ref_global,
            measured_global,
            baseline,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn build_part(
        net: &BusNetwork<T>,
        cfg: &SimConfig<T>,
        whole: &[PhaseModel<T>; 3],
        topo_pre: &TopologyState,
        topo_fault: &TopologyState,
        topo_post: &TopologyState,
        threshold_pu: T,
    ) -> Result<PartModels<T>> {
        let study = [
            PhaseModel::for_area(net, Area::Study, topo_pre)?,
            PhaseModel::for_area(net, Area::Study, topo_fault)?,
            PhaseModel::for_area(net, Area::Study, topo_post)?,
        ];
        let external = [
            PhaseModel::for_area(net, Area::External, topo_pre)?,
            PhaseModel::for_area(net, Area::External, topo_post)?,
        ];
        let eq_study = init_equilibrium(net, &study[0].rn)?;
        let eq_ext = init_equilibrium(net, &external[0].rn)?;
        let x0_ext = eq_ext.state.to_vector();
        let lin_ext = LinearModel::at(&external[0].dyn_model, &x0_ext, &eq_ext.inputs);
        let red_ext = reduce_linear(&lin_ext, cfg.reduction_tol)?;
        let norms = column_norms(&external[0].rn.ym.y21);
        let ext_ids = external[0].rn.ym.gen_order.clone();
        let selection = select_functions(&norms, &ext_ids, threshold_pu, &BTreeSet::new())?;
        let hyb_ext = HybridModel::partitioned(&lin_ext, red_ext.clone(), selection.clone())?;

        let global_ids = &whole[0].rn.ym.gen_order;
        let study_global = study[0]
            .rn
            .ym
            .gen_order
            .iter()
            .map(|g| global_ids.iter().position(|x| x == g).expect("study gen in net"))
            .collect();
        let ext_global = ext_ids
            .iter()
            .map(|g| global_ids.iter().position(|x| x == g).expect("ext gen in net"))
            .collect();
        Ok(PartModels {
            study,
            external,
            eq_study,
            eq_ext,
            lin_ext,
            red_ext,
            hyb_ext,
            selection,
            norms,
            study_global,
            ext_global,
        })
    }

    /// The partitioned models, or the reason they are unavailable.
    pub fn part(&self) -> Result<&PartModels<T>> {
        self.part.as_ref().ok_or_else(|| {
            Error::Scenario(format!(
                "policy requires a partitioned system: {}",
                self.part_error.as_deref().unwrap_or("unavailable")
            ))
        })
    }

    /// Global machine ids, in state-column order.
    pub fn gen_ids(&self) -> &[GenId] {
        &self.whole[0].rn.ym.gen_order
    }

    /// Total number of global states.
    pub fn n_total(&self) -> usize {
        self.gen_ids().len() * PER_MACHINE
    }

    fn phase(&self, k: usize) -> Phase {
        if k < self.k_on {
            Phase::Pre
        } else if k < self.k_clear {
            Phase::Fault
        } else {
            Phase::Post
        }
    }

    fn fault_active(&self, k: usize) -> bool {
        k >= self.k_on && k < self.k_clear
    }

    fn t_at(&self, k: usize) -> T {
        T::of(k as f64) * self.cfg.step
    }

    /// Maximum study-machine rotor-angle deviation from the reference
    /// machine, relative to the pre-fault baseline, in radians.
    pub fn delta_deviation(&self, x_global: &DVector<T>) -> T {
        let dref = x_global[self.ref_global * PER_MACHINE + DELTA];
        let mut worst = T::zero();
        for (i, &g) in self.measured_global.iter().enumerate() {
            let dev = ((x_global[g * PER_MACHINE + DELTA] - dref) - self.baseline[i]).abs();
            if dev > worst {
                worst = dev;
            }
        }
        worst
    }

    fn assemble_global(&self, part: &PartModels<T>, xs: &DVector<T>, xe: &DVector<T>) -> DVector<T> {
        let mut x = DVector::zeros(self.n_total());
        for (k, &g) in part.study_global.iter().enumerate() {
            x.rows_mut(g * PER_MACHINE, PER_MACHINE)
                .copy_from(&xs.rows(k * PER_MACHINE, PER_MACHINE));
        }
        for (k, &g) in part.ext_global.iter().enumerate() {
            x.rows_mut(g * PER_MACHINE, PER_MACHINE)
                .copy_from(&xe.rows(k * PER_MACHINE, PER_MACHINE));
        }
        x
    }

    fn split_global(&self, part: &PartModels<T>, x: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let mut xs = DVector::zeros(part.study_global.len() * PER_MACHINE);
        let mut xe = DVector::zeros(part.ext_global.len() * PER_MACHINE);
        for (k, &g) in part.study_global.iter().enumerate() {
            xs.rows_mut(k * PER_MACHINE, PER_MACHINE)
                .copy_from(&x.rows(g * PER_MACHINE, PER_MACHINE));
        }
        for (k, &g) in part.ext_global.iter().enumerate() {
            xe.rows_mut(k * PER_MACHINE, PER_MACHINE)
                .copy_from(&x.rows(g * PER_MACHINE, PER_MACHINE));
        }
        (xs, xe)
    }

    /// Runs the scenario under its configured policy.
    pub fn run(&self) -> Result<Trajectory<T>> {
        self.run_policy(self.cfg.policy)
    }

    /// Runs the scenario under the given policy.
    pub fn run_policy(&self, policy: Policy) -> Result<Trajectory<T>> {
        match policy {
            Policy::FullOnly => self.run_monolithic(),
            Policy::LinearOnly => self.run_partitioned(false),
            Policy::AdaptivePartitioned => self.run_partitioned(true),
            Policy::AdaptiveUnpartitioned => self.run_adaptive_unpartitioned(),
        }
    }

    fn run_monolithic(&self) -> Result<Trajectory<T>> {
        let h = self.cfg.step;
        let u = &self.eq_whole.inputs;
        let mut x = self.eq_whole.state.to_vector();
        let mut rec = Recorder::new(self.nsteps + 1);
        rec.push(T::zero(), x.clone(), Mode::Full);
        for k in 0..self.nsteps {
            let dynm = &self.whole[self.phase(k) as usize].dyn_model;
            match step_rk4(|xx| rhs_full(dynm, xx, u), &x, h, k) {
                Ok(next) => x = next,
                Err(Error::NonFinite(_)) => {
                    rec.blowup(self.t_at(k + 1));
                    break;
                }
                Err(e) => return Err(e),
            }
            if !rec.push(self.t_at(k + 1), x.clone(), Mode::Full) {
                break;
            }
        }
        Ok(rec.finish(self.gen_ids().to_vec()))
    }

    fn ext_phase<'a>(&self, part: &'a PartModels<T>, ph: Phase) -> &'a PhaseModel<T> {
        match ph {
            Phase::Post => &part.external[1],
            _ => &part.external[0],
        }
    }

    /// Partitioned co-simulation; with `adaptive == false` the external
    /// area stays in the linear reduced model throughout.
    fn run_partitioned(&self, adaptive: bool) -> Result<Trajectory<T>> {
        let part = self.part()?;
        let h = self.cfg.step;
        let mut cur = CurrentExt::new(
            part.lin_ext.clone(),
            part.red_ext.clone(),
            part.hyb_ext.clone(),
        );
        let mut sw = SwitchState {
            mode: Mode::Linear,
            delta_max: to_radians(self.cfg.switching.delta_max_deg),
            t_th: T::zero(),
            t_th_max: self.cfg.switching.t_th_max,
            reference_gen: self.reference_gen,
        };
        let mut repr = PartRepr::Split {
            xs: part.eq_study.state.to_vector(),
            xr: DVector::zeros(cur.red.r),
            us: part.eq_study.inputs.clone(),
            ue: part.eq_ext.inputs.clone(),
        };
        let mut rec = Recorder::new(self.nsteps + 1);
        // The deviation check reads the sample recorded at the end of the
        // previous step, so one assembled row per step is enough.
        let mut last_row = self.global_row(part, &cur, &repr);
        rec.push(T::zero(), last_row.clone(), sw.mode);

        for k in 0..self.nsteps {
            let ph = self.phase(k);
            let t = self.t_at(k);
            if adaptive {
                let dev = self.delta_deviation(&last_row);
                let dec = switch_mode(&sw, self.fault_active(k), dev, h);
                if dec.state.mode != sw.mode {
                    self.transition(part, &cur, &mut repr, dec.state.mode, ph, t, &mut rec)?;
                }
                sw = dec.state;
                if dec.relinearize {
                    if let PartRepr::Split { xr, ue, .. } = &mut repr {
                        let x_ext = cur.hyb.lift(xr);
                        let dynm = &self.ext_phase(part, ph).dyn_model;
                        let lin_new = LinearModel::at(dynm, &x_ext, ue);
                        match reduce_linear(&lin_new, self.cfg.reduction_tol) {
                            Ok(red_new) => {
                                let hyb_new = HybridModel::partitioned(
                                    &lin_new,
                                    red_new.clone(),
                                    part.selection.clone(),
                                )?;
                                cur = CurrentExt::new(lin_new, red_new, hyb_new);
                                *xr = DVector::zeros(cur.red.r);
                                rec.relinearizations.push(t);
                            }
                            Err(Error::NonHurwitz(_)) => rec.relin_failures.push(t),
                            Err(e) => return Err(e),
                        }
                        sw.t_th = T::zero();
                    }
                }
            }

            let blew_up = match &mut repr {
                PartRepr::Mono(x) => {
                    let dynm = &self.whole[ph as usize].dyn_model;
                    let u = &self.eq_whole.inputs;
                    match step_rk4(|xx| rhs_full(dynm, xx, u), x, h, k) {
                        Ok(next) => {
                            *x = next;
                            false
                        }
                        Err(Error::NonFinite(_)) => true,
                        Err(e) => return Err(e),
                    }
                }
                PartRepr::Split { xs, xr, us, ue } => {
                    let study = &part.study[ph as usize].dyn_model;
                    let ext = self.ext_phase(part, ph);
                    let ext_mode = if adaptive { sw.mode } else { Mode::Linear };
                    let step_s = step_rk4(|xx| rhs_full(study, xx, us), xs, h, k);
                    let step_e = match ext_mode {
                        Mode::Linear => {
                            let du = ue.stack() - &cur.lin.u0;
                            step_rk4(|rr| cur.linear_rhs(rr, &du), xr, h, k)
                        }
                        Mode::Hybrid => {
                            step_rk4(|rr| rhs_hybrid(&cur.hyb, &ext.dyn_model, rr, ue), xr, h, k)
                        }
                        Mode::Full => unreachable!("full mode is monolithic"),
                    };
                    match (step_s, step_e) {
                        (Ok(ns), Ok(ne)) => {
                            *xs = ns;
                            *xr = ne;
                            // One-way exchange with a one-step lag: both
                            // areas are recovered with the inputs that were
                            // in force during the step, then swapped.
                            let emf_s = part.study[ph as usize].dyn_model.emf_phasors(xs);
                            let vb_s = part.study[ph as usize]
                                .rn
                                .boundary_phasors(&emf_s, &phasors(us))?;
                            let x_ext = cur.hyb.lift(xr);
                            let emf_e = ext.dyn_model.emf_phasors(&x_ext);
                            let vb_e = ext.rn.boundary_phasors(&emf_e, &phasors(ue))?;
                            us.set_phasors(&vb_e);
                            ue.set_phasors(&vb_s);
                            false
                        }
                        (Err(Error::NonFinite(_)), _) | (_, Err(Error::NonFinite(_))) => true,
                        (Err(e), _) | (_, Err(e)) => return Err(e),
                    }
                }
            };
            if blew_up {
                rec.blowup(self.t_at(k + 1));
                break;
            }
            let mode = if adaptive { sw.mode } else { Mode::Linear };
            last_row = self.global_row(part, &cur, &repr);
            if !rec.push(self.t_at(k + 1), last_row.clone(), mode) {
                break;
            }
        }
        Ok(rec.finish(self.gen_ids().to_vec()))
    }

    /// Global state sample of a partitioned representation.
    fn global_row(&self, part: &PartModels<T>, cur: &CurrentExt<T>, repr: &PartRepr<T>) -> DVector<T> {
        match repr {
            PartRepr::Mono(x) => x.clone(),
            PartRepr::Split { xs, xr, .. } => {
                let xe = cur.hyb.lift(xr);
                self.assemble_global(part, xs, &xe)
            }
        }
    }

    /// Switches the integration representation when the mode changes.
    /// Propagation between hybrid and linear shares the same coordinates;
    /// entering or leaving full mode moves between the monolithic and split
    /// representations.
    fn transition(
        &self,
        part: &PartModels<T>,
        cur: &CurrentExt<T>,
        repr: &mut PartRepr<T>,
        new_mode: Mode,
        ph: Phase,
        t: T,
        rec: &mut Recorder<T>,
    ) -> Result<()> {
        let defect = match (&*repr, new_mode) {
            (PartRepr::Split { xs, xr, .. }, Mode::Full) => {
                let round_trip = cur.red.project(&cur.red.lift(xr)) - xr;
                let defect = round_trip.amax();
                let xe = cur.hyb.lift(xr);
                *repr = PartRepr::Mono(self.assemble_global(part, xs, &xe));
                defect
            }
            (PartRepr::Mono(x), Mode::Hybrid | Mode::Linear) => {
                let (xs, xe) = self.split_global(part, x);
                let xr = cur.hyb.project(&xe);
                let round_trip = cur.red.project(&cur.red.lift(&xr)) - &xr;
                let defect = round_trip.amax();
                // Recover every bus voltage of the current topology from
                // the monolithic state to seed the boundary inputs.
                let whole = &self.whole[ph as usize];
                let emf = whole.dyn_model.emf_phasors(x);
                let v_all = whole.rn.eliminated_phasors(&emf, &[])?;
                let mut us = part.eq_study.inputs.clone();
                let mut ue = part.eq_ext.inputs.clone();
                let study_ties = &part.study[ph as usize].rn.ties;
                let phasor_at = |bus| {
                    whole
                        .rn
                        .bus_row(bus)
                        .map(|r| v_all[r])
                        .ok_or_else(|| Error::Validation(format!("bus {bus} missing")))
                };
                // Each area's inputs are the boundary voltages on the other
                // side of its ties.
                let for_study: Vec<Complex<T>> = study_ties
                    .iter()
                    .map(|tie| phasor_at(tie.opposite_bus))
                    .collect::<Result<_>>()?;
                let for_ext: Vec<Complex<T>> = study_ties
                    .iter()
                    .map(|tie| phasor_at(tie.own_bus))
                    .collect::<Result<_>>()?;
                us.set_phasors(&for_study);
                ue.set_phasors(&for_ext);
                *repr = PartRepr::Split { xs, xr, us, ue };
                defect
            }
            // Hybrid and linear modes share the reduced coordinates.
            _ => T::zero(),
        };
        rec.switch_defects.push((t, defect));
        Ok(())
    }

    fn run_adaptive_unpartitioned(&self) -> Result<Trajectory<T>> {
        let h = self.cfg.step;
        let u = &self.eq_whole.inputs;
        let mut cur_lin = self.lin_whole.clone();
        let mut cur_hyb = self.hyb_whole.clone();
        // The purely linear mode is autonomous (the boundary inputs never
        // move), so its right-hand side is an affine map through the sparse
        // Jacobian snapshot.
        let mut sp_a = SparseRows::from_dense(&cur_lin.a);
        let mut sw = SwitchState {
            mode: Mode::Linear,
            delta_max: to_radians(self.cfg.switching.delta_max_unpartitioned_deg),
            t_th: T::zero(),
            t_th_max: self.cfg.switching.t_th_max,
            reference_gen: self.reference_gen,
        };
        let mut x = self.eq_whole.state.to_vector();
        let mut rec = Recorder::new(self.nsteps + 1);
        rec.push(T::zero(), x.clone(), sw.mode);

        for k in 0..self.nsteps {
            let ph = self.phase(k);
            let t = self.t_at(k);
            let dev = self.delta_deviation(&x);
            let dec = switch_mode(&sw, self.fault_active(k), dev, h);
            if dec.state.mode != sw.mode {
                rec.switch_defects.push((t, T::zero()));
            }
            sw = dec.state;
            if dec.relinearize {
                let dynm = &self.whole[ph as usize].dyn_model;
                cur_lin = LinearModel::at(dynm, &x, u);
                cur_hyb = HybridModel::unpartitioned(&cur_lin, cur_hyb.selection.clone())?;
                sp_a = SparseRows::from_dense(&cur_lin.a);
                rec.relinearizations.push(t);
                sw.t_th = T::zero();
            }
            let dynm = &self.whole[ph as usize].dyn_model;
            let stepped = match sw.mode {
                Mode::Full => step_rk4(|xx| rhs_full(dynm, xx, u), &x, h, k),
                Mode::Hybrid => {
                    step_rk4(|xx| rhs_hybrid_unpartitioned(&cur_hyb, dynm, xx, u), &x, h, k)
                }
                Mode::Linear => step_rk4(
                    |xx| {
                        let mut dx = sp_a.mul(&(xx - &cur_lin.x0));
                        dx += &cur_lin.f0;
                        dx
                    },
                    &x,
                    h,
                    k,
                ),
            };
            match stepped {
                Ok(next) => x = next,
                Err(Error::NonFinite(_)) => {
                    rec.blowup(self.t_at(k + 1));
                    break;
                }
                Err(e) => return Err(e),
            }
            if !rec.push(self.t_at(k + 1), x.clone(), sw.mode) {
                break;
            }
        }
        Ok(rec.finish(self.gen_ids().to_vec()))
    }

    /// Co-simulates both areas in full detail with the one-step boundary
    /// exchange lag; used to characterize the splitting error.
    pub fn run_partitioned_full(&self) -> Result<Trajectory<T>> {
        let part = self.part()?;
        let h = self.cfg.step;
        let mut xs = part.eq_study.state.to_vector();
        let mut xe = part.eq_ext.state.to_vector();
        let mut us = part.eq_study.inputs.clone();
        let mut ue = part.eq_ext.inputs.clone();
        let mut rec = Recorder::new(self.nsteps + 1);
        rec.push(T::zero(), self.assemble_global(part, &xs, &xe), Mode::Full);
        for k in 0..self.nsteps {
            let ph = self.phase(k);
            let study = &part.study[ph as usize];
            let ext = self.ext_phase(part, ph);
            let ns = step_rk4(|xx| rhs_full(&study.dyn_model, xx, &us), &xs, h, k);
            let ne = step_rk4(|xx| rhs_full(&ext.dyn_model, xx, &ue), &xe, h, k);
            match (ns, ne) {
                (Ok(a), Ok(b)) => {
                    xs = a;
                    xe = b;
                }
                (Err(Error::NonFinite(_)), _) | (_, Err(Error::NonFinite(_))) => {
                    rec.blowup(self.t_at(k + 1));
                    break;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
            let emf_s = study.dyn_model.emf_phasors(&xs);
            let vb_s = study.rn.boundary_phasors(&emf_s, &phasors(&us))?;
            let emf_e = ext.dyn_model.emf_phasors(&xe);
            let vb_e = ext.rn.boundary_phasors(&emf_e, &phasors(&ue))?;
            us.set_phasors(&vb_e);
            ue.set_phasors(&vb_s);
            if !rec.push(self.t_at(k + 1), self.assemble_global(part, &xs, &xe), Mode::Full) {
                break;
            }
        }
        Ok(rec.finish(self.gen_ids().to_vec()))
    }
}

impl<T: Float> PartModels<T> {
    /// External machine ids in model order.
    pub fn eq_ext_gen_ids(&self) -> Vec<GenId> {
        self.external[0].rn.ym.gen_order.clone()
    }
}

fn phasors<T: Float>(u: &BoundaryInput<T>) -> Vec<Complex<T>> {
    (0..u.theta.len())
        .map(|t| crate::scalar::from_polar(u.v[t], u.theta[t]))
        .collect()
}
