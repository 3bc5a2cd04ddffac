//! Admittance assembly, node elimination, and the reduced interconnection
//! matrices used by the dynamic models.
//!
//! Each generator is represented by an internal EMF node behind its stator
//! impedance `ra + j xd_p`. Loads become constant shunt admittances at their
//! solved voltage. For a partitioned system, each tie line is replaced by a
//! fictitious source node behind the tie impedance; the source voltage is the
//! boundary-bus voltage of the opposite area and acts as a model input.
//!
//! Eliminating every physical bus with zero current injection leaves a matrix
//! over source nodes only (machine EMFs and fictitious sources). The same
//! elimination yields a recovery operator that reconstructs every bus voltage
//! from the source voltages, which is how boundary buses are observed.

use super::{Area, BranchId, BusId, BusNetwork, GenId};
use crate::error::{Error, Result};
use crate::scalar::Float;
use nalgebra::DMatrix;
use num_complex::Complex;
use std::collections::BTreeSet;

/// Real part of the shunt admittance applied to a faulted bus, in per unit.
pub const FAULT_SHUNT_RE: f64 = 1.0e6;
/// Imaginary part of the shunt admittance applied to a faulted bus.
pub const FAULT_SHUNT_IM: f64 = -1.0e6;

/// A node of the assembled admittance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    /// A physical network bus.
    Bus(BusId),
    /// The internal EMF node of a generator.
    Machine(GenId),
    /// The fictitious source node replacing a tie line.
    Fict(BranchId),
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Bus(b) => write!(f, "bus {b}"),
            Node::Machine(g) => write!(f, "machine {g}"),
            Node::Fict(t) => write!(f, "tie source {t}"),
        }
    }
}

/// Which topology changes are in effect.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopologyState {
    /// Bus carrying a bolted three-phase fault, modeled as a large shunt.
    pub fault_bus: Option<BusId>,
    /// Branches removed from service, e.g. by protective tripping.
    pub removed_branches: BTreeSet<BranchId>,
}

impl TopologyState {
    /// Topology with no fault and no outages.
    pub fn nominal() -> Self {
        Self::default()
    }

    /// Topology with a fault at `bus` and no outages.
    pub fn faulted(bus: BusId) -> Self {
        Self {
            fault_bus: Some(bus),
            removed_branches: BTreeSet::new(),
        }
    }
}

/// A complex admittance matrix together with the meaning of its rows.
#[derive(Debug, Clone)]
pub struct Admittance<T> {
    pub matrix: DMatrix<Complex<T>>,
    pub nodes: Vec<Node>,
}

impl<T: Float> Admittance<T> {
    /// Index of `node` in the matrix.
    pub fn index_of(&self, node: Node) -> Option<usize> {
        self.nodes.iter().position(|n| *n == node)
    }
}

/// One tie line as seen from a given area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TieEnd {
    pub branch: BranchId,
    /// Boundary bus on this area's own side.
    pub own_bus: BusId,
    /// Boundary bus on the opposite side, whose voltage drives the source.
    pub opposite_bus: BusId,
}

/// Block-partitioned admittance over source nodes after eliminating buses.
///
/// Rows and columns are ordered machines first, then fictitious sources.
/// `y11` couples machines to machines, `y12` machines to sources, `y21` is
/// the transpose of `y12`, and `y22` couples sources to sources.
#[derive(Debug, Clone)]
pub struct ReducedYMatrix<T> {
    pub y11: DMatrix<Complex<T>>,
    pub y12: DMatrix<Complex<T>>,
    pub y21: DMatrix<Complex<T>>,
    pub y22: DMatrix<Complex<T>>,
    /// Generator ids in row order of `y11`.
    pub gen_order: Vec<GenId>,
    /// Opposite-side boundary bus per fictitious source, in column order of
    /// `y12`. Ids may repeat when ties share a boundary bus.
    pub boundary_order: Vec<BusId>,
}

impl<T: Float> ReducedYMatrix<T> {
    /// Number of machines.
    pub fn ng(&self) -> usize {
        self.y11.nrows()
    }

    /// Number of fictitious sources (boundary inputs).
    pub fn nb(&self) -> usize {
        self.y22.nrows()
    }
}

/// A fully reduced network for one area or for the whole system: the source
/// admittance blocks plus the recovery operator for eliminated buses.
#[derive(Debug, Clone)]
pub struct ReducedNetwork<T> {
    pub ym: ReducedYMatrix<T>,
    /// Maps stacked source voltages `[machine EMFs; fictitious sources]` to
    /// the voltages of every eliminated bus.
    pub recovery: DMatrix<Complex<T>>,
    /// Eliminated bus ids in recovery row order.
    pub eliminated: Vec<BusId>,
    /// Tie lines seen from this side; empty for an unpartitioned system.
    pub ties: Vec<TieEnd>,
    /// Which area this network models; `None` for the whole system.
    pub area: Option<Area>,
    /// Row of `recovery` holding each tie's own boundary bus.
    own_boundary_rows: Vec<usize>,
}

impl<T: Float> ReducedNetwork<T> {
    /// Builds the reduced network of one area, with fictitious sources for
    /// its tie lines.
    pub fn for_area(net: &BusNetwork<T>, area: Area, topo: &TopologyState) -> Result<Self> {
        let part = &net.partition;
        if part.buses(area).is_empty() || part.generators(area).is_empty() {
            return Err(Error::Validation(format!(
                "the {area} area has no buses or no generators"
            )));
        }
        let ties = area_ties(net, area)?;
        for tie in &ties {
            if topo.removed_branches.contains(&tie.branch) {
                return Err(Error::Scenario(format!(
                    "removing tie line {} would change the model inputs; not supported",
                    tie.branch
                )));
            }
        }
        let in_area = |b: BusId| part.buses(area).contains(&b);
        let bus_nodes: Vec<Node> = net
            .buses
            .iter()
            .filter(|b| in_area(b.id))
            .map(|b| Node::Bus(b.id))
            .collect();
        let machine_nodes: Vec<Node> = net
            .generators
            .iter()
            .filter(|g| part.generators(area).contains(&g.id))
            .map(|g| Node::Machine(g.id))
            .collect();
        let fict_nodes: Vec<Node> = ties.iter().map(|t| Node::Fict(t.branch)).collect();
        let include_branch = |from: BusId, to: BusId| in_area(from) && in_area(to);
        let adm = assemble(net, topo, bus_nodes, machine_nodes, fict_nodes, include_branch, &ties);
        reduce_to_sources(net, adm, ties, Some(area))
    }

    /// Builds the monolithic reduced network over every machine in the
    /// system, with no boundary inputs.
    pub fn whole_system(net: &BusNetwork<T>, topo: &TopologyState) -> Result<Self> {
        let bus_nodes: Vec<Node> = net.buses.iter().map(|b| Node::Bus(b.id)).collect();
        let machine_nodes: Vec<Node> = net.generators.iter().map(|g| Node::Machine(g.id)).collect();
        let adm = assemble(net, topo, bus_nodes, machine_nodes, Vec::new(), |_, _| true, &[]);
        reduce_to_sources(net, adm, Vec::new(), None)
    }

    /// Voltages of this area's own boundary buses, one per tie, given the
    /// machine EMFs and the fictitious source voltages.
    pub fn boundary_phasors(
        &self,
        emf: &[Complex<T>],
        fict: &[Complex<T>],
    ) -> Result<Vec<Complex<T>>> {
        let v = self.eliminated_phasors(emf, fict)?;
        Ok(self.own_boundary_rows.iter().map(|&r| v[r]).collect())
    }

    /// Voltages of every eliminated bus given the source voltages.
    pub fn eliminated_phasors(
        &self,
        emf: &[Complex<T>],
        fict: &[Complex<T>],
    ) -> Result<DVectorC<T>> {
        if emf.len() != self.ym.ng() || fict.len() != self.ym.nb() {
            return Err(Error::Dimension(format!(
                "expected {} EMFs and {} source voltages, got {} and {}",
                self.ym.ng(),
                self.ym.nb(),
                emf.len(),
                fict.len()
            )));
        }
        let mut sources = DVectorC::<T>::zeros(emf.len() + fict.len());
        for (i, e) in emf.iter().enumerate() {
            sources[i] = *e;
        }
        for (i, f) in fict.iter().enumerate() {
            sources[emf.len() + i] = *f;
        }
        Ok(&self.recovery * sources)
    }

    /// Recovery row for a specific bus id.
    pub fn bus_row(&self, bus: BusId) -> Option<usize> {
        self.eliminated.iter().position(|b| *b == bus)
    }
}

type DVectorC<T> = nalgebra::DVector<Complex<T>>;

fn area_ties<T: Float>(net: &BusNetwork<T>, area: Area) -> Result<Vec<TieEnd>> {
    let part = &net.partition;
    part.tie_lines
        .iter()
        .map(|id| {
            let br = net
                .branch(*id)
                .ok_or_else(|| Error::Validation(format!("unknown tie line {id}")))?;
            let from_area = part.area_of_bus(br.from_bus);
            let (own_bus, opposite_bus) = if from_area == Some(area) {
                (br.from_bus, br.to_bus)
            } else {
                (br.to_bus, br.from_bus)
            };
            Ok(TieEnd {
                branch: *id,
                own_bus,
                opposite_bus,
            })
        })
        .collect()
}

/// Assembles the full admittance matrix over `bus_nodes ++ machine_nodes ++
/// fict_nodes`. `include_branch` filters ordinary branches by endpoint; tie
/// lines are handled separately through `ties`.
fn assemble<T: Float>(
    net: &BusNetwork<T>,
    topo: &TopologyState,
    bus_nodes: Vec<Node>,
    machine_nodes: Vec<Node>,
    fict_nodes: Vec<Node>,
    include_branch: impl Fn(BusId, BusId) -> bool,
    ties: &[TieEnd],
) -> Admittance<T> {
    let nodes: Vec<Node> = bus_nodes
        .into_iter()
        .chain(machine_nodes)
        .chain(fict_nodes)
        .collect();
    let idx = |node: Node| nodes.iter().position(|n| *n == node).expect("node exists");
    let n = nodes.len();
    let mut y = DMatrix::<Complex<T>>::zeros(n, n);
    let tie_ids: BTreeSet<BranchId> = ties.iter().map(|t| t.branch).collect();

    let half = T::of(0.5);
    for br in &net.branches {
        if !br.in_service
            || topo.removed_branches.contains(&br.id)
            || tie_ids.contains(&br.id)
            || !include_branch(br.from_bus, br.to_bus)
        {
            continue;
        }
        let ys = Complex::new(br.resistance, br.reactance).inv();
        let ysh = Complex::new(T::zero(), br.shunt_susceptance * half);
        let (i, j) = (idx(Node::Bus(br.from_bus)), idx(Node::Bus(br.to_bus)));
        y[(i, i)] += ys + ysh;
        y[(j, j)] += ys + ysh;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }

    for tie in ties {
        let br = net.branch(tie.branch).expect("validated tie");
        let ys = Complex::new(br.resistance, br.reactance).inv();
        let ysh = Complex::new(T::zero(), br.shunt_susceptance * half);
        let (i, f) = (idx(Node::Bus(tie.own_bus)), idx(Node::Fict(tie.branch)));
        y[(i, i)] += ys + ysh;
        y[(f, f)] += ys + ysh;
        y[(i, f)] -= ys;
        y[(f, i)] -= ys;
    }

    for bus in &net.buses {
        let Some(i) = nodes.iter().position(|n| *n == Node::Bus(bus.id)) else {
            continue;
        };
        if bus.load_p != T::zero() || bus.load_q != T::zero() {
            let v2 = bus.voltage_magnitude * bus.voltage_magnitude;
            y[(i, i)] += Complex::new(bus.load_p / v2, -bus.load_q / v2);
        }
        if topo.fault_bus == Some(bus.id) {
            y[(i, i)] += Complex::new(T::of(FAULT_SHUNT_RE), T::of(FAULT_SHUNT_IM));
        }
    }

    for gen in &net.generators {
        let Some(m) = nodes.iter().position(|n| *n == Node::Machine(gen.id)) else {
            continue;
        };
        let b = idx(Node::Bus(gen.bus_id));
        let ym = Complex::new(gen.params.ra, gen.params.xd_p).inv();
        y[(m, m)] += ym;
        y[(b, b)] += ym;
        y[(m, b)] -= ym;
        y[(b, m)] -= ym;
    }

    Admittance { matrix: y, nodes }
}

/// Builds the admittance matrix of the whole system over all buses and all
/// machine internal nodes, under the given topology.
pub fn build_admittance<T: Float>(net: &BusNetwork<T>, topo: &TopologyState) -> Admittance<T> {
    let bus_nodes: Vec<Node> = net.buses.iter().map(|b| Node::Bus(b.id)).collect();
    let machine_nodes: Vec<Node> = net.generators.iter().map(|g| Node::Machine(g.id)).collect();
    assemble(net, topo, bus_nodes, machine_nodes, Vec::new(), |_, _| true, &[])
}

/// Eliminates the nodes not listed in `keep`, returning the reduced matrix.
///
/// With `Y` partitioned into kept (`k`) and eliminated (`e`) blocks, the
/// result is `Y_kk - Y_ke Y_ee^{-1} Y_ek`.
pub fn kron_reduce<T: Float>(y: &DMatrix<Complex<T>>, keep: &[usize]) -> Result<DMatrix<Complex<T>>> {
    kron_reduce_with_recovery(y, keep).map(|(reduced, _)| reduced)
}

/// Like [`kron_reduce`], also returning the recovery operator
/// `-Y_ee^{-1} Y_ek` that reconstructs eliminated node voltages from kept
/// node voltages (valid when eliminated nodes carry no injection).
pub fn kron_reduce_with_recovery<T: Float>(
    y: &DMatrix<Complex<T>>,
    keep: &[usize],
) -> Result<(DMatrix<Complex<T>>, DMatrix<Complex<T>>)> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(Error::Dimension("admittance matrix must be square".into()));
    }
    let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
    if keep_set.len() != keep.len() || keep.iter().any(|&i| i >= n) {
        return Err(Error::Dimension("keep indices must be unique and in range".into()));
    }
    let elim: Vec<usize> = (0..n).filter(|i| !keep_set.contains(i)).collect();
    if elim.is_empty() {
        return Ok((y.select_rows(keep).select_columns(keep), DMatrix::zeros(0, keep.len())));
    }
    let y_kk = y.select_rows(keep).select_columns(keep);
    let y_ke = y.select_rows(keep).select_columns(&elim);
    let y_ek = y.select_rows(&elim).select_columns(keep);
    let y_ee = y.select_rows(&elim).select_columns(&elim);

    let lu = y_ee.clone().lu();
    if !lu_is_invertible(&lu) {
        return Err(Error::SingularReduction(
            elim.iter().map(|&i| format!("node {i}")).collect(),
        ));
    }
    let sol = lu
        .solve(&y_ek)
        .ok_or_else(|| Error::SingularReduction(elim.iter().map(|&i| format!("node {i}")).collect()))?;
    let reduced = &y_kk - &y_ke * &sol;
    let recovery = -sol;
    Ok((reduced, recovery))
}

fn lu_is_invertible<T: Float>(lu: &nalgebra::LU<Complex<T>, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    let mut max_piv = T::zero();
    let mut min_piv = T::max_value().unwrap_or_else(T::one);
    for i in 0..n {
        let p = crate::scalar::cnorm(u[(i, i)]);
        if p > max_piv {
            max_piv = p;
        }
        if p < min_piv {
            min_piv = p;
        }
    }
    n > 0 && max_piv > T::zero() && min_piv > max_piv * T::of(1e-13)
}

/// Splits an admittance over source nodes into the machine and fictitious
/// source blocks of a [`ReducedYMatrix`]. The node list must contain only
/// [`Node::Machine`] and [`Node::Fict`] entries, machines first.
pub fn partition_admittance<T: Float>(
    adm: &Admittance<T>,
    net: &BusNetwork<T>,
) -> Result<ReducedYMatrix<T>> {
    let mut gen_order = Vec::new();
    let mut fict_branches = Vec::new();
    for (i, node) in adm.nodes.iter().enumerate() {
        match node {
            Node::Machine(g) => {
                if !fict_branches.is_empty() {
                    return Err(Error::Dimension(
                        "machine nodes must precede fictitious source nodes".into(),
                    ));
                }
                let _ = i;
                gen_order.push(*g);
            }
            Node::Fict(b) => fict_branches.push(*b),
            Node::Bus(b) => {
                return Err(Error::Dimension(format!(
                    "bus {b} must be eliminated before partitioning"
                )))
            }
        }
    }
    let ng = gen_order.len();
    let nb = fict_branches.len();
    if adm.matrix.nrows() != ng + nb {
        return Err(Error::Dimension("node list does not match matrix size".into()));
    }
    let part = &net.partition;
    let boundary_order = fict_branches
        .iter()
        .map(|id| {
            let br = net
                .branch(*id)
                .ok_or_else(|| Error::Validation(format!("unknown tie line {id}")))?;
            // The source voltage equals the boundary bus on the side of the
            // area that does *not* contain the machines listed here.
            let machine_area = gen_order
                .first()
                .and_then(|g| part.area_of_gen(*g));
            let from_area = part.area_of_bus(br.from_bus);
            Ok(match machine_area {
                Some(a) if from_area == Some(a) => br.to_bus,
                Some(_) => br.from_bus,
                None => br.to_bus,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = &adm.matrix;
    Ok(ReducedYMatrix {
        y11: m.view((0, 0), (ng, ng)).into_owned(),
        y12: m.view((0, ng), (ng, nb)).into_owned(),
        y21: m.view((ng, 0), (nb, ng)).into_owned(),
        y22: m.view((ng, ng), (nb, nb)).into_owned(),
        gen_order,
        boundary_order,
    })
}

/// Eliminates all bus nodes of `adm`, producing the block-partitioned source
/// admittance and the bus-voltage recovery operator.
fn reduce_to_sources<T: Float>(
    net: &BusNetwork<T>,
    adm: Admittance<T>,
    ties: Vec<TieEnd>,
    area: Option<Area>,
) -> Result<ReducedNetwork<T>> {
    let keep: Vec<usize> = adm
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| !matches!(n, Node::Bus(_)))
        .map(|(i, _)| i)
        .collect();
    let eliminated: Vec<BusId> = adm
        .nodes
        .iter()
        .filter_map(|n| match n {
            Node::Bus(b) => Some(*b),
            _ => None,
        })
        .collect();

    let (reduced, recovery) = kron_reduce_with_recovery(&adm.matrix, &keep).map_err(|e| {
        match e {
            Error::SingularReduction(_) => islanding_error(&adm, &keep),
            other => other,
        }
    })?;
    let kept_nodes: Vec<Node> = keep.iter().map(|&i| adm.nodes[i]).collect();
    let ym = partition_admittance(
        &Admittance {
            matrix: reduced,
            nodes: kept_nodes,
        },
        net,
    )?;
    let own_boundary_rows = ties
        .iter()
        .map(|t| {
            eliminated
                .iter()
                .position(|b| *b == t.own_bus)
                .ok_or_else(|| Error::Validation(format!("boundary bus {} not in area", t.own_bus)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedNetwork {
        ym,
        recovery,
        eliminated,
        ties,
        area,
        own_boundary_rows,
    })
}

/// When bus elimination is singular, finds buses with no path to any source
/// node and reports them as an island.
fn islanding_error<T: Float>(adm: &Admittance<T>, keep: &[usize]) -> Error {
    let n = adm.matrix.nrows();
    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = keep.to_vec();
    for &k in keep {
        reached[k] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !reached[j] && adm.matrix[(i, j)].norm_sqr() > T::zero() {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    let island: Vec<u32> = adm
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, node)| match node {
            Node::Bus(b) if !reached[i] => Some(b.0),
            _ => None,
        })
        .collect();
    if island.is_empty() {
        Error::SingularReduction(
            adm.nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| !keep.contains(i))
                .map(|(_, n)| n.to_string())
                .collect(),
        )
    } else {
        Error::Islanded(island)
    }
}
