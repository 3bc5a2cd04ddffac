//! Static network description: buses, branches, generators, and the two-area
//! partition used by the reduced-order co-simulation.
//!
//! The network lives on a common MVA base. Branches are pi-model lines with
//! series impedance and total charging susceptance, loads are converted to
//! constant shunt admittances at their solved voltage, and each generator
//! couples to its terminal bus through its stator impedance.

mod admittance;
mod schema;

pub use admittance::{
    build_admittance, kron_reduce, partition_admittance, Admittance, Node, ReducedNetwork,
    ReducedYMatrix, TieEnd, TopologyState, FAULT_SHUNT_RE, FAULT_SHUNT_IM,
};
pub use schema::{load_network, save_network};

use crate::dynamics::GeneratorParams;
use crate::error::{Error, Result};
use crate::scalar::Float;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a bus in the network file.
    BusId
);
id_newtype!(
    /// Identifier of a branch in the network file.
    BranchId
);
id_newtype!(
    /// Identifier of a generator in the network file.
    GenId
);

/// One network bus with its solved voltage and attached load.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    pub id: BusId,
    /// Voltage magnitude in per unit, from a solved power flow.
    pub voltage_magnitude: T,
    /// Voltage angle in radians.
    pub voltage_angle: T,
    /// Active load in per unit on the system base.
    pub load_p: T,
    /// Reactive load in per unit on the system base.
    pub load_q: T,
}

/// A pi-model transmission branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series resistance in per unit.
    pub resistance: T,
    /// Series reactance in per unit.
    pub reactance: T,
    /// Total line-charging susceptance in per unit, split half per end.
    pub shunt_susceptance: T,
    pub in_service: bool,
}

/// A synchronous generator and its steady-state dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub id: GenId,
    pub bus_id: BusId,
    pub params: GeneratorParams<T>,
    /// Active power injection in per unit on the system base.
    pub dispatch_p: T,
    /// Reactive power injection in per unit on the system base.
    pub dispatch_q: T,
}

/// Study or external side of the two-area partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Area {
    Study,
    External,
}

impl Area {
    /// The other area.
    pub fn opposite(self) -> Area {
        match self {
            Area::Study => Area::External,
            Area::External => Area::Study,
        }
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Area::Study => write!(f, "study"),
            Area::External => write!(f, "external"),
        }
    }
}

/// Assignment of every bus and generator to the study or external area,
/// together with the tie lines joining the two.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionSpec {
    pub study_generators: BTreeSet<GenId>,
    pub external_generators: BTreeSet<GenId>,
    pub study_buses: BTreeSet<BusId>,
    pub external_buses: BTreeSet<BusId>,
    /// Branches with one endpoint in each area, in file order.
    pub tie_lines: Vec<BranchId>,
    /// Study-side endpoints of the tie lines.
    pub study_boundary: BTreeSet<BusId>,
    /// External-side endpoints of the tie lines.
    pub external_boundary: BTreeSet<BusId>,
}

impl PartitionSpec {
    /// Buses belonging to `area`.
    pub fn buses(&self, area: Area) -> &BTreeSet<BusId> {
        match area {
            Area::Study => &self.study_buses,
            Area::External => &self.external_buses,
        }
    }

    /// Generators belonging to `area`.
    pub fn generators(&self, area: Area) -> &BTreeSet<GenId> {
        match area {
            Area::Study => &self.study_generators,
            Area::External => &self.external_generators,
        }
    }

    /// Boundary buses on `area`'s own side of the ties.
    pub fn boundary(&self, area: Area) -> &BTreeSet<BusId> {
        match area {
            Area::Study => &self.study_boundary,
            Area::External => &self.external_boundary,
        }
    }

    /// Area containing `bus`, if assigned.
    pub fn area_of_bus(&self, bus: BusId) -> Option<Area> {
        if self.study_buses.contains(&bus) {
            Some(Area::Study)
        } else if self.external_buses.contains(&bus) {
            Some(Area::External)
        } else {
            None
        }
    }

    /// Area containing `gen`, if assigned.
    pub fn area_of_gen(&self, gen: GenId) -> Option<Area> {
        if self.study_generators.contains(&gen) {
            Some(Area::Study)
        } else if self.external_generators.contains(&gen) {
            Some(Area::External)
        } else {
            None
        }
    }

    /// Whether the partition actually defines a nonempty external area.
    pub fn has_external(&self) -> bool {
        !self.external_generators.is_empty() && !self.tie_lines.is_empty()
    }
}

/// Complete validated network on a common MVA base.
#[derive(Debug, Clone, PartialEq)]
pub struct BusNetwork<T> {
    pub base_mva: T,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
    pub generators: Vec<Generator<T>>,
    pub partition: PartitionSpec,
}

impl<T: Float> BusNetwork<T> {
    /// Position of `bus` in `buses`.
    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == bus)
    }

    /// Position of `gen` in `generators`.
    pub fn gen_index(&self, gen: GenId) -> Option<usize> {
        self.generators.iter().position(|g| g.id == gen)
    }

    /// Branch with the given id.
    pub fn branch(&self, id: BranchId) -> Option<&Branch<T>> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// Bus with the given id.
    pub fn bus(&self, id: BusId) -> Option<&Bus<T>> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Complex terminal voltage of `bus`.
    pub fn bus_phasor(&self, id: BusId) -> Option<num_complex::Complex<T>> {
        self.bus(id)
            .map(|b| crate::scalar::from_polar(b.voltage_magnitude, b.voltage_angle))
    }

    /// Generators attached to `area`, in file order.
    pub fn generators_in(&self, area: Area) -> Vec<&Generator<T>> {
        self.generators
            .iter()
            .filter(|g| self.partition.generators(area).contains(&g.id))
            .collect()
    }

    /// Checks every structural rule; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        if self.base_mva <= T::zero() {
            return Err(Error::Validation("base_mva must be positive".into()));
        }
        let mut bus_ids = BTreeSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
            if b.voltage_magnitude <= T::zero() {
                return Err(Error::Validation(format!(
                    "bus {} has non-positive voltage magnitude",
                    b.id
                )));
            }
        }
        let mut branch_ids = BTreeSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return Err(Error::Validation(format!("duplicate branch id {}", br.id)));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_ids.contains(&end) {
                    return Err(Error::Validation(format!(
                        "branch {} references unknown bus {}",
                        br.id, end
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!(
                    "branch {} connects bus {} to itself",
                    br.id, br.from_bus
                )));
            }
            let z2 = br.resistance * br.resistance + br.reactance * br.reactance;
            if br.in_service && z2 == T::zero() {
                return Err(Error::Validation(format!(
                    "branch {} has zero series impedance",
                    br.id
                )));
            }
        }
        let mut gen_ids = BTreeSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                return Err(Error::Validation(format!("duplicate generator id {}", g.id)));
            }
            if !bus_ids.contains(&g.bus_id) {
                return Err(Error::Validation(format!(
                    "generator {} references unknown bus {}",
                    g.id, g.bus_id
                )));
            }
            g.params
                .validate()
                .map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
        }
        self.validate_partition(&bus_ids, &gen_ids)
    }

    fn validate_partition(
        &self,
        bus_ids: &BTreeSet<BusId>,
        gen_ids: &BTreeSet<GenId>,
    ) -> Result<()> {
        let p = &self.partition;
        for id in p.study_buses.iter().chain(&p.external_buses) {
            if !bus_ids.contains(id) {
                return Err(Error::Validation(format!("partition lists unknown bus {id}")));
            }
        }
        for id in p.study_generators.iter().chain(&p.external_generators) {
            if !gen_ids.contains(id) {
                return Err(Error::Validation(format!(
                    "partition lists unknown generator {id}"
                )));
            }
        }
        if let Some(shared) = p.study_buses.intersection(&p.external_buses).next() {
            return Err(Error::Validation(format!("bus {shared} assigned to both areas")));
        }
        if let Some(shared) = p
            .study_generators
            .intersection(&p.external_generators)
            .next()
        {
            return Err(Error::Validation(format!(
                "generator {shared} assigned to both areas"
            )));
        }
        if p.study_buses.len() + p.external_buses.len() != bus_ids.len() {
            return Err(Error::Validation("partition does not cover every bus".into()));
        }
        if p.study_generators.len() + p.external_generators.len() != gen_ids.len() {
            return Err(Error::Validation(
                "partition does not cover every generator".into(),
            ));
        }
        for g in &self.generators {
            let ga = p.area_of_gen(g.id).expect("covered above");
            let ba = p.area_of_bus(g.bus_id).expect("covered above");
            if ga != ba {
                return Err(Error::Validation(format!(
                    "generator {} is in the {ga} area but its bus {} is in the {ba} area",
                    g.id, g.bus_id
                )));
            }
        }
        let mut study_ends = BTreeSet::new();
        let mut external_ends = BTreeSet::new();
        for id in &p.tie_lines {
            let br = self
                .branch(*id)
                .ok_or_else(|| Error::Validation(format!("unknown tie line {id}")))?;
            match (p.area_of_bus(br.from_bus), p.area_of_bus(br.to_bus)) {
                (Some(Area::Study), Some(Area::External)) => {
                    study_ends.insert(br.from_bus);
                    external_ends.insert(br.to_bus);
                }
                (Some(Area::External), Some(Area::Study)) => {
                    study_ends.insert(br.to_bus);
                    external_ends.insert(br.from_bus);
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "tie line {id} does not cross between the areas"
                    )))
                }
            }
        }
        for br in &self.branches {
            let crosses = p.area_of_bus(br.from_bus) != p.area_of_bus(br.to_bus);
            if crosses && !p.tie_lines.contains(&br.id) {
                return Err(Error::Validation(format!(
                    "branch {} crosses between areas but is not listed as a tie line",
                    br.id
                )));
            }
        }
        if study_ends != p.study_boundary {
            return Err(Error::Validation(
                "study boundary buses do not match the tie-line endpoints".into(),
            ));
        }
        if external_ends != p.external_boundary {
            return Err(Error::Validation(
                "external boundary buses do not match the tie-line endpoints".into(),
            ));
        }
        Ok(())
    }
}
