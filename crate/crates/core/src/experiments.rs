//! One function per CLI command. Each returns rendered artifacts; writing
//! them is left to the caller.

use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::artifacts::{density_csv, json_artifact, tails_csv, transfer_csv, Artifact, Stamp};
use crate::assumption_audit::run_audit;
use crate::asymptotics::{axis_claims, neutral_claims, ClaimCheck};
use crate::config::{ExperimentConfig, TransferBlock};
use crate::error::{AcimError, Result};
use crate::example_maps::{build_map, ExampleId};
use crate::induction::{level_volumes, tail_exponent, TailFit};
use crate::map_model::PiecewiseMap;
use crate::quasi_holder::{default_test_family, iterate_check, ly_estimate, test_family, IterateCheck, LYReport, QuasiHolderConfig};
use crate::transfer::{
    blowup_slope, build_partition, build_transfer, classify_measure, extend_density, invariant_density, BlowupFit,
    Classification, ExtensionReport, GridDensity, PowerReport, TransferMatrix, UlamOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Classify,
    Density,
    InduceStats,
    Asymptotics,
    Seminorm,
    Audit,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Classify,
        Command::Density,
        Command::InduceStats,
        Command::Asymptotics,
        Command::Seminorm,
        Command::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Density => "density",
            Command::InduceStats => "induce-stats",
            Command::Asymptotics => "asymptotics",
            Command::Seminorm => "seminorm",
            Command::Audit => "audit",
        }
    }
}

impl FromStr for Command {
    type Err = AcimError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| AcimError::Config(format!("unknown command {s:?}")))
    }
}

/// Held-out test functions are drawn from a seed distinct from the fitting family.
const HELD_OUT_SALT: u64 = 0x005e_ed0f_4e1d;

/// Check that every block `command` needs is present and the map is valid.
pub fn validate(config: &ExperimentConfig, command: Command) -> Result<()> {
    config.map.validate()?;
    match command {
        Command::Classify | Command::InduceStats => {
            let b = config.induction()?;
            if b.n_max == 0 || b.n_samples == 0 {
                return Err(AcimError::Config("induction.n_max and n_samples must be positive".into()));
            }
            if command == Command::Classify && !(b.window.0 >= 1 && b.window.0 < b.window.1 && b.window.1 <= b.n_max) {
                return Err(AcimError::Config(format!(
                    "induction.window {:?} must satisfy 1 <= lo < hi <= n_max",
                    b.window
                )));
            }
        }
        Command::Density => validate_transfer(config.transfer()?)?,
        Command::Seminorm => {
            validate_transfer(config.transfer()?)?;
            let q = config.quasi_holder()?;
            QuasiHolderConfig::new(q.alpha, q.eps0, q.k_max, 1)?;
        }
        Command::Asymptotics => {
            config.asymptotics()?;
            if config.map.example_id == ExampleId::Two {
                return Err(AcimError::Config(
                    "asymptotics needs a neutral germ with invariant axes; example 2 has none".into(),
                ));
            }
        }
        Command::Audit => {
            config.audit()?;
        }
    }
    Ok(())
}

fn validate_transfer(t: &TransferBlock) -> Result<()> {
    if t.samples_per_cell == 0 || t.max_iter == 0 || !(t.tol > 0.0) {
        return Err(AcimError::Config(
            "transfer.samples_per_cell and max_iter must be positive and tol > 0".into(),
        ));
    }
    Ok(())
}

pub fn run(config: &ExperimentConfig, command: Command) -> Result<Vec<Artifact>> {
    validate(config, command)?;
    let map = build_map(&config.map)?;
    let stamp = Stamp {
        config_hash: config.hash(),
        seed: config.seed,
    };
    match command {
        Command::Classify => classify(config, &map, &stamp),
        Command::Density => density(config, &map, &stamp),
        Command::InduceStats => induce_stats(config, &map, &stamp),
        Command::Asymptotics => asymptotics(config, &map, &stamp),
        Command::Seminorm => seminorm(config, &map, &stamp),
        Command::Audit => {
            let report = run_audit(&map, config.audit()?, config.seed)?;
            Ok(vec![json_artifact("audit.json", &stamp, &report)])
        }
    }
}

#[derive(Serialize)]
struct ClassifyOut<'a> {
    command: &'static str,
    map: &'a str,
    n_samples: usize,
    n_max: usize,
    #[serde(flatten)]
    classification: Classification,
}

fn classify(config: &ExperimentConfig, map: &PiecewiseMap, stamp: &Stamp) -> Result<Vec<Artifact>> {
    let b = config.induction()?;
    let profile = level_volumes(map, b.n_max, b.n_samples, config.seed);
    // with a transfer block the extended-mass bound can use sup h^
    let h_hat = match &config.transfer {
        Some(t) => Some(induced_density(map, t, config.seed)?.1),
        None => None,
    };
    let classification = classify_measure(&profile, b.window, h_hat.as_ref(), map.r_preimage_count(), b.margin)?;
    let out = ClassifyOut {
        command: "classify",
        map: &map.name,
        n_samples: b.n_samples,
        n_max: b.n_max,
        classification,
    };
    Ok(vec![
        json_artifact("classification.json", stamp, &out),
        tails_csv(stamp, &profile),
    ])
}

fn induced_density(map: &PiecewiseMap, t: &TransferBlock, seed: u64) -> Result<(TransferMatrix, GridDensity, PowerReport)> {
    let partition = Arc::new(build_partition(map, t.resolution)?);
    let matrix = build_transfer(map, partition, &UlamOptions::new(t.samples_per_cell, seed))?;
    let (h, power) = invariant_density(&matrix, t.tol, t.max_iter)?;
    Ok((matrix, h, power))
}

#[derive(Serialize)]
struct TransferHeader {
    resolution: usize,
    seed: u64,
    samples_per_cell: usize,
    active_cells: usize,
    nonzeros: usize,
    max_row_sum_error: f64,
    starved_cells: usize,
    rejected_samples: usize,
}

#[derive(Serialize)]
struct DensityOut<'a> {
    command: &'static str,
    map: &'a str,
    transfer: TransferHeader,
    power: PowerReport,
    /// Mass of h on the induced domain; h is normalized to 1 there.
    induced_mass: f64,
    extension: Option<ExtensionSummary>,
}

#[derive(Serialize)]
struct ExtensionSummary {
    n_levels: usize,
    resolved_cells: usize,
    unresolved_cells: usize,
    clamped_cells: usize,
    clamped_mass: f64,
    extended_mass: f64,
    blowup: Option<BlowupFit>,
}

impl ExtensionSummary {
    fn new(r: &ExtensionReport, ext: &GridDensity, blowup: Option<BlowupFit>) -> Self {
        ExtensionSummary {
            n_levels: r.n_levels,
            resolved_cells: r.levels.len(),
            unresolved_cells: r.unresolved_cells.len(),
            clamped_cells: r.clamped_cells,
            clamped_mass: r.clamped_mass,
            extended_mass: ext.mass(),
            blowup,
        }
    }
}

fn density(config: &ExperimentConfig, map: &PiecewiseMap, stamp: &Stamp) -> Result<Vec<Artifact>> {
    let t = config.transfer()?;
    let (matrix, h, power) = induced_density(map, t, config.seed)?;
    let (shown, extension) = if t.n_levels > 0 {
        let (ext, rep) = extend_density(map, &h, t.n_levels)?;
        let blowup = blowup_slope(map, &ext, &rep).ok();
        let summary = ExtensionSummary::new(&rep, &ext, blowup);
        (ext, Some(summary))
    } else {
        (h.clone(), None)
    };
    let out = DensityOut {
        command: "density",
        map: &map.name,
        transfer: TransferHeader {
            resolution: t.resolution,
            seed: config.seed,
            samples_per_cell: t.samples_per_cell,
            active_cells: matrix.n(),
            nonzeros: matrix.vals.len(),
            max_row_sum_error: matrix.max_row_sum_error(),
            starved_cells: matrix.starved.len(),
            rejected_samples: matrix.rejects.total(),
        },
        power,
        induced_mass: h.mass(),
        extension,
    };
    Ok(vec![
        json_artifact("density.json", stamp, &out),
        density_csv(stamp, &shown),
        transfer_csv(stamp, &matrix),
    ])
}

#[derive(Serialize)]
struct InduceOut<'a> {
    command: &'static str,
    map: &'a str,
    n_samples: usize,
    n_max: usize,
    region_volume: f64,
    residual_volume: f64,
    rejected: usize,
    tail_fit: Option<TailFit>,
}

fn induce_stats(config: &ExperimentConfig, map: &PiecewiseMap, stamp: &Stamp) -> Result<Vec<Artifact>> {
    let b = config.induction()?;
    let profile = level_volumes(map, b.n_max, b.n_samples, config.seed);
    let out = InduceOut {
        command: "induce-stats",
        map: &map.name,
        n_samples: b.n_samples,
        n_max: b.n_max,
        region_volume: profile.region_volume,
        residual_volume: profile.residual_volume,
        rejected: profile.rejected,
        tail_fit: tail_exponent(&profile, b.window).ok(),
    };
    Ok(vec![
        json_artifact("induce_stats.json", stamp, &out),
        tails_csv(stamp, &profile),
    ])
}

#[derive(Serialize)]
struct AsymptoticsOut<'a> {
    command: &'static str,
    map: &'a str,
    orbit_length: usize,
    start: f64,
    claims: Vec<ClaimCheck>,
    pass: bool,
}

fn asymptotics(config: &ExperimentConfig, map: &PiecewiseMap, stamp: &Stamp) -> Result<Vec<Artifact>> {
    let b = config.asymptotics()?;
    let claims = match config.map.example_id {
        ExampleId::Neutral1d => neutral_claims(map, config.map.gamma, b.orbit_length, b.start, b.fit_window)?,
        _ => axis_claims(map, b.orbit_length, b.start, b.fit_window)?,
    };
    let out = AsymptoticsOut {
        command: "asymptotics",
        map: &map.name,
        orbit_length: b.orbit_length,
        start: b.start,
        pass: claims.iter().all(|c| c.pass),
        claims,
    };
    Ok(vec![json_artifact("asymptotics.json", stamp, &out)])
}

#[derive(Serialize)]
struct SeminormOut<'a> {
    command: &'static str,
    map: &'a str,
    alpha: f64,
    eps0: f64,
    k_max: usize,
    resolution: usize,
    #[serde(flatten)]
    report: LYReport,
    held_out: Vec<HeldOut>,
}

#[derive(Serialize)]
struct HeldOut {
    f_id: String,
    #[serde(flatten)]
    check: IterateCheck,
}

/// Iterates compared against the fitted bound for each held-out function.
pub const LY_ITERATES: usize = 20;

fn seminorm(config: &ExperimentConfig, map: &PiecewiseMap, stamp: &Stamp) -> Result<Vec<Artifact>> {
    let t = config.transfer()?;
    let q = config.quasi_holder()?;
    let qh = QuasiHolderConfig::new(q.alpha, q.eps0, q.k_max, map.dim)?;
    let (matrix, _, _) = induced_density(map, t, config.seed)?;
    let family = default_test_family(&matrix.partition, config.seed);
    let report = ly_estimate(&matrix, &family, &qh)?;
    let held = held_out_family(&matrix, config.seed);
    let held_out = held
        .functions
        .iter()
        .map(|(id, f)| {
            Ok(HeldOut {
                f_id: id.clone(),
                check: iterate_check(&matrix, f, &report, &qh, LY_ITERATES)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = SeminormOut {
        command: "seminorm",
        map: &map.name,
        alpha: q.alpha,
        eps0: q.eps0,
        k_max: q.k_max,
        resolution: t.resolution,
        report,
        held_out,
    };
    Ok(vec![json_artifact("ly_report.json", stamp, &out)])
}

/// Held-out family used by `seminorm`, exposed for the replication suite.
pub fn held_out_family(matrix: &TransferMatrix, seed: u64) -> crate::quasi_holder::TestFamily {
    test_family(&matrix.partition, 5, 5, seed ^ HELD_OUT_SALT)
}
