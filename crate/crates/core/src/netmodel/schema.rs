//! On-disk JSON schema for [`BusNetwork`] and the conversions to and from the
//! in-memory representation.
//!
//! Files always store `f64` values; loading converts into whatever scalar the
//! caller requested. A loaded network is validated before it is returned.

use super::{Branch, BranchId, Bus, BusId, BusNetwork, GenId, Generator, PartitionSpec};
use crate::dynamics::GeneratorParams;
use crate::error::{Error, Result};
use crate::scalar::Float;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    base_mva: f64,
    buses: Vec<BusDto>,
    branches: Vec<BranchDto>,
    generators: Vec<GeneratorDto>,
    #[serde(default)]
    partition: PartitionDto,
}

#[derive(Debug, Serialize, Deserialize)]
struct BusDto {
    id: BusId,
    voltage_magnitude: f64,
    #[serde(default)]
    voltage_angle: f64,
    #[serde(default)]
    load_p: f64,
    #[serde(default)]
    load_q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchDto {
    id: BranchId,
    from_bus: BusId,
    to_bus: BusId,
    resistance: f64,
    reactance: f64,
    #[serde(default)]
    shunt_susceptance: f64,
    #[serde(default = "default_true")]
    in_service: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct GeneratorDto {
    id: GenId,
    bus_id: BusId,
    #[serde(default)]
    dispatch_p: f64,
    #[serde(default)]
    dispatch_q: f64,
    params: ParamsDto,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsDto {
    h: f64,
    d: f64,
    xd: f64,
    xq: f64,
    xd_p: f64,
    xq_p: f64,
    ra: f64,
    tdo_p: f64,
    tqo_p: f64,
    tch: f64,
    tgv: f64,
    r_gov: f64,
    ka: f64,
    ta: f64,
    kf: f64,
    tf: f64,
    ke: f64,
    te: f64,
    ae: f64,
    be: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PartitionDto {
    #[serde(default)]
    study_generators: Vec<GenId>,
    #[serde(default)]
    external_generators: Vec<GenId>,
    #[serde(default)]
    study_buses: Vec<BusId>,
    #[serde(default)]
    external_buses: Vec<BusId>,
    #[serde(default)]
    tie_lines: Vec<BranchId>,
    #[serde(default)]
    boundary_buses: BoundaryDto,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct BoundaryDto {
    #[serde(default)]
    study: Vec<BusId>,
    #[serde(default)]
    external: Vec<BusId>,
}

/// Loads and validates a network file.
pub fn load_network<T: Float>(path: impl AsRef<Path>) -> Result<BusNetwork<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let net = from_file(file);
    net.validate()?;
    Ok(net)
}

/// Serializes a network back to pretty-printed JSON.
pub fn save_network<T: Float>(net: &BusNetwork<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = to_file(net);
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn from_file<T: Float>(file: NetworkFile) -> BusNetwork<T> {
    BusNetwork {
        base_mva: T::of(file.base_mva),
        buses: file
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                voltage_magnitude: T::of(b.voltage_magnitude),
                voltage_angle: T::of(b.voltage_angle),
                load_p: T::of(b.load_p),
                load_q: T::of(b.load_q),
            })
            .collect(),
        branches: file
            .branches
            .into_iter()
            .map(|b| Branch {
                id: b.id,
                from_bus: b.from_bus,
                to_bus: b.to_bus,
                resistance: T::of(b.resistance),
                reactance: T::of(b.reactance),
                shunt_susceptance: T::of(b.shunt_susceptance),
                in_service: b.in_service,
            })
            .collect(),
        generators: file
            .generators
            .into_iter()
            .map(|g| Generator {
                id: g.id,
                bus_id: g.bus_id,
                dispatch_p: T::of(g.dispatch_p),
                dispatch_q: T::of(g.dispatch_q),
                params: GeneratorParams {
                    h: T::of(g.params.h),
                    d: T::of(g.params.d),
                    xd: T::of(g.params.xd),
                    xq: T::of(g.params.xq),
                    xd_p: T::of(g.params.xd_p),
                    xq_p: T::of(g.params.xq_p),
                    ra: T::of(g.params.ra),
                    tdo_p: T::of(g.params.tdo_p),
                    tqo_p: T::of(g.params.tqo_p),
                    tch: T::of(g.params.tch),
                    tgv: T::of(g.params.tgv),
                    r_gov: T::of(g.params.r_gov),
                    ka: T::of(g.params.ka),
                    ta: T::of(g.params.ta),
                    kf: T::of(g.params.kf),
                    tf: T::of(g.params.tf),
                    ke: T::of(g.params.ke),
                    te: T::of(g.params.te),
                    ae: T::of(g.params.ae),
                    be: T::of(g.params.be),
                },
            })
            .collect(),
        partition: PartitionSpec {
            study_generators: file.partition.study_generators.into_iter().collect(),
            external_generators: file.partition.external_generators.into_iter().collect(),
            study_buses: file.partition.study_buses.into_iter().collect(),
            external_buses: file.partition.external_buses.into_iter().collect(),
            tie_lines: file.partition.tie_lines,
            study_boundary: file.partition.boundary_buses.study.into_iter().collect(),
            external_boundary: file.partition.boundary_buses.external.into_iter().collect(),
        },
    }
}

fn to_file<T: Float>(net: &BusNetwork<T>) -> NetworkFile {
    NetworkFile {
        base_mva: net.base_mva.to_f64_lossy(),
        buses: net
            .buses
            .iter()
            .map(|b| BusDto {
                id: b.id,
                voltage_magnitude: b.voltage_magnitude.to_f64_lossy(),
                voltage_angle: b.voltage_angle.to_f64_lossy(),
                load_p: b.load_p.to_f64_lossy(),
                load_q: b.load_q.to_f64_lossy(),
            })
            .collect(),
        branches: net
            .branches
            .iter()
            .map(|b| BranchDto {
                id: b.id,
                from_bus: b.from_bus,
                to_bus: b.to_bus,
                resistance: b.resistance.to_f64_lossy(),
                reactance: b.reactance.to_f64_lossy(),
                shunt_susceptance: b.shunt_susceptance.to_f64_lossy(),
                in_service: b.in_service,
            })
            .collect(),
        generators: net
            .generators
            .iter()
            .map(|g| GeneratorDto {
                id: g.id,
                bus_id: g.bus_id,
                dispatch_p: g.dispatch_p.to_f64_lossy(),
                dispatch_q: g.dispatch_q.to_f64_lossy(),
                params: ParamsDto {
                    h: g.params.h.to_f64_lossy(),
                    d: g.params.d.to_f64_lossy(),
                    xd: g.params.xd.to_f64_lossy(),
                    xq: g.params.xq.to_f64_lossy(),
                    xd_p: g.params.xd_p.to_f64_lossy(),
                    xq_p: g.params.xq_p.to_f64_lossy(),
                    ra: g.params.ra.to_f64_lossy(),
                    tdo_p: g.params.tdo_p.to_f64_lossy(),
                    tqo_p: g.params.tqo_p.to_f64_lossy(),
                    tch: g.params.tch.to_f64_lossy(),
                    tgv: g.params.tgv.to_f64_lossy(),
                    r_gov: g.params.r_gov.to_f64_lossy(),
                    ka: g.params.ka.to_f64_lossy(),
                    ta: g.params.ta.to_f64_lossy(),
                    kf: g.params.kf.to_f64_lossy(),
                    tf: g.params.tf.to_f64_lossy(),
                    ke: g.params.ke.to_f64_lossy(),
                    te: g.params.te.to_f64_lossy(),
                    ae: g.params.ae.to_f64_lossy(),
                    be: g.params.be.to_f64_lossy(),
                },
            })
            .collect(),
        partition: PartitionDto {
            study_generators: net.partition.study_generators.iter().copied().collect(),
            external_generators: net.partition.external_generators.iter().copied().collect(),
            study_buses: net.partition.study_buses.iter().copied().collect(),
            external_buses: net.partition.external_buses.iter().copied().collect(),
            tie_lines: net.partition.tie_lines.clone(),
            boundary_buses: BoundaryDto {
                study: net.partition.study_boundary.iter().copied().collect(),
                external: net.partition.external_boundary.iter().copied().collect(),
            },
        },
    }
}
