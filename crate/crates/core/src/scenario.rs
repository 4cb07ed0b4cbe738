//! Scenario files and the architecture comparison built on them.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::delay::{self, DelaySpec, DiscreteDelays};
use crate::error::{Error, Result};
use crate::lti::PartitionedPlant;
use crate::plant::{
    self, ActuatorKind, CostSpec, DisturbanceSpec, PztParams, StepperParams, SubsystemModel,
};
use crate::sim::{self, BurstPattern, CostReport, MonteCarlo, Policy};
use crate::synthesis::{
    self, ControllerRealization, FirStructure, LegacyBaseline, LegacyParams,
    StructuredSynthesisResult,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Slack used when checking the cost ordering on exact values.
pub const ORDERING_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureChoice {
    CenDelayfree,
    CenD1,
    Dec,
    Blockdiag,
    Legacy,
    Fir,
}

impl ArchitectureChoice {
    pub const ALL: [ArchitectureChoice; 6] = [
        ArchitectureChoice::CenDelayfree,
        ArchitectureChoice::CenD1,
        ArchitectureChoice::Dec,
        ArchitectureChoice::Blockdiag,
        ArchitectureChoice::Legacy,
        ArchitectureChoice::Fir,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ArchitectureChoice::CenDelayfree => "cen_delayfree",
            ArchitectureChoice::CenD1 => "cen_d1",
            ArchitectureChoice::Dec => "dec",
            ArchitectureChoice::Blockdiag => "blockdiag",
            ArchitectureChoice::Legacy => "legacy",
            ArchitectureChoice::Fir => "fir",
        }
    }
}

impl FromStr for ArchitectureChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.key() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|a| a.key()).collect();
                Error::param("architectures", format!("unknown `{s}`, expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    /// Self delay τ1 in seconds.
    pub tau_self: f64,
    /// Cross delay τ2 in seconds.
    pub tau_cross: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub target: ActuatorKind,
    pub freq_hz: f64,
    pub eps: f64,
    pub noise_std: f64,
    pub damping: f64,
}

impl DisturbanceConfig {
    pub fn spec(&self) -> DisturbanceSpec {
        DisturbanceSpec {
            freq_hz: self.freq_hz,
            eps: self.eps,
            noise_std: self.noise_std,
            damping: self.damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub sample_rate_hz: f64,
    pub pzt: PztParams,
    pub stepper: StepperParams,
    pub eps_reg: f64,
    pub delays: DelayConfig,
    pub burst: BurstPattern,
    pub disturbances: Vec<DisturbanceConfig>,
    pub architectures: Vec<ArchitectureChoice>,
    pub fir_length: usize,
    pub legacy: LegacyParams,
    pub monte_carlo: MonteCarlo,
    /// Length of the example traces written next to the reports.
    pub trace_steps: usize,
    pub output_dir: String,
}

impl Default for Scenario {
    fn default() -> Self {
        let fs = 6000.0;
        Self {
            schema_version: SCHEMA_VERSION,
            name: "default".into(),
            sample_rate_hz: fs,
            pzt: PztParams::default(),
            stepper: StepperParams::default(),
            eps_reg: 1e-8,
            delays: DelayConfig {
                tau_self: 2.0 / fs,
                tau_cross: 3.0 / fs,
            },
            burst: BurstPattern::continuous(),
            disturbances: Vec::new(),
            architectures: vec![
                ArchitectureChoice::CenDelayfree,
                ArchitectureChoice::CenD1,
                ArchitectureChoice::Dec,
                ArchitectureChoice::Blockdiag,
                ArchitectureChoice::Legacy,
            ],
            fir_length: 40,
            legacy: LegacyParams {
                fine_limit: Some(0.3),
                desat_gain: 1.0,
                coarse_deadband: 0.5,
            },
            monte_carlo: MonteCarlo {
                n_runs: 32,
                steps: 200_000,
                base_seed: 1,
            },
            trace_steps: 6000,
            output_dir: "out".into(),
        }
    }
}

/// Everything derived from a scenario before synthesis.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    pub subsystems: Vec<SubsystemModel>,
    pub cost: CostSpec,
    pub continuous: PartitionedPlant,
    pub plant: PartitionedPlant,
    pub delay_spec: DelaySpec,
    pub delays: DiscreteDelays,
    pub h: f64,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Field-level checks followed by building the model.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::param("sample_rate_hz", "must be > 0"));
        }
        if self.architectures.is_empty() {
            return Err(Error::param("architectures", "list is empty"));
        }
        if self.monte_carlo.n_runs < 2 || self.monte_carlo.steps < 10 {
            return Err(Error::param("monte_carlo", "need n_runs >= 2 and steps >= 10"));
        }
        if self.trace_steps == 0 {
            return Err(Error::param("trace_steps", "must be >= 1"));
        }
        BurstPattern::new(self.burst.pulses_per_burst, self.burst.interburst_steps)?;
        let model = self.build()?;
        if self.architectures.contains(&ArchitectureChoice::Fir)
            && self.fir_length <= model.delays.d2
        {
            return Err(Error::param("fir_length", "must exceed d2"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn build(&self) -> Result<ScenarioModel> {
        let h = self.h();
        let spec = DelaySpec::new(self.delays.tau_self, self.delays.tau_cross);
        delay::validate_delays(spec.tau_self, spec.tau_cross).into_result()?;
        let delay_spec = delay::to_discrete(&spec, h)?;
        let part = delay_spec.discrete.expect("to_discrete fills the discrete part");
        let delays = DiscreteDelays::new(part.d1, part.d2)?;

        let mut subsystems = vec![
            plant::make_pzt_model(&self.pzt)?,
            plant::make_stepper_model(&self.stepper)?,
        ];
        for d in &self.disturbances {
            let sub = subsystems
                .iter_mut()
                .find(|s| s.kind == d.target)
                .expect("both kinds are present");
            *sub = plant::augment_disturbance(sub, &d.spec())?;
        }
        let cost = plant::build_cost_matrices(&subsystems, self.eps_reg)?;
        let continuous = plant::assemble_global_plant(&subsystems, &cost)?;
        let plant = plant::discretize_plant(&continuous, h)?;
        Ok(ScenarioModel {
            subsystems,
            cost,
            continuous,
            plant,
            delay_spec,
            delays,
            h,
        })
    }
}

/// A synthesized controller ready for evaluation.
#[derive(Debug, Clone)]
pub enum Design {
    Linear(ControllerRealization),
    Structured(StructuredSynthesisResult),
    Legacy(LegacyBaseline),
}

#[derive(Debug, Clone)]
pub struct NamedDesign {
    pub choice: ArchitectureChoice,
    pub name: String,
    pub design: Design,
}

impl NamedDesign {
    pub fn policy(&self) -> &dyn Policy {
        match &self.design {
            Design::Linear(r) => r,
            Design::Structured(s) => &s.realization,
            Design::Legacy(l) => l,
        }
    }

    /// Closed-loop H2 cost for linear designs.
    pub fn exact_h2(&self, plant: &PartitionedPlant) -> Result<Option<f64>> {
        let r = match &self.design {
            Design::Linear(r) => r,
            Design::Structured(s) => &s.realization,
            Design::Legacy(_) => return Ok(None),
        };
        sim::exact_h2_cost(&plant.realization, &r.state_space()).map(Some)
    }
}

/// Synthesizes one architecture; failures name the stage.
pub fn synthesize(
    scenario: &Scenario,
    model: &ScenarioModel,
    choice: ArchitectureChoice,
) -> Result<NamedDesign> {
    let g = &model.plant;
    let DiscreteDelays { d1, d2 } = model.delays;
    let stage = |e: Error| match e {
        Error::Synthesis { .. } => e,
        other if other.class() == crate::ErrorClass::Config => other,
        other => Error::synthesis(choice.key(), other),
    };
    let design = match choice {
        ArchitectureChoice::CenDelayfree => {
            Design::Linear(synthesis::lqg_delay_free(&g.realization).map_err(stage)?)
        }
        ArchitectureChoice::CenD1 => {
            Design::Linear(synthesis::centralized_delayed_lqg(&g.realization, d1).map_err(stage)?)
        }
        ArchitectureChoice::Dec => {
            Design::Linear(synthesis::decentralized_delayed_lqg(g, model.delays).map_err(stage)?)
        }
        ArchitectureChoice::Blockdiag => {
            Design::Linear(synthesis::block_diagonal_lqg(g, d1).map_err(stage)?)
        }
        ArchitectureChoice::Legacy => Design::Legacy(
            synthesis::legacy_baseline(g, model.delays, scenario.legacy).map_err(stage)?,
        ),
        ArchitectureChoice::Fir => {
            let structure = FirStructure::Delayed;
            Design::Structured(
                synthesis::structured_fir_youla(
                    g,
                    model.delays,
                    scenario.fir_length,
                    structure,
                    structure.default_inner_loop(),
                )
                .map_err(stage)?,
            )
        }
    };
    let name = match &design {
        Design::Linear(r) => r.architecture.label(),
        Design::Structured(s) => s.realization.architecture.label(),
        Design::Legacy(_) => format!("legacy_{d1}_{d2}"),
    };
    Ok(NamedDesign { choice, name, design })
}

/// Exact-cost chain `cen_d1 ≤ dec ≤ blockdiag`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub cen_d1: f64,
    pub dec: f64,
    pub blockdiag: f64,
    /// Strict inequalities are required when `d2 > d1 > 0`.
    pub strict: bool,
    /// Smallest gap in the chain.
    pub margin: f64,
    pub holds: bool,
}

impl OrderingCheck {
    pub fn new(cen_d1: f64, dec: f64, blockdiag: f64, delays: DiscreteDelays) -> Self {
        let strict = delays.d2 > delays.d1 && delays.d1 > 0;
        let margin = (dec - cen_d1).min(blockdiag - dec);
        let holds = if strict {
            margin > ORDERING_SLACK
        } else {
            margin >= -ORDERING_SLACK
        };
        Self {
            cen_d1,
            dec,
            blockdiag,
            strict,
            margin,
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub d1: usize,
    pub d2: usize,
    /// Sorted by Monte Carlo mean, the one estimate every report has.
    pub reports: Vec<CostReport>,
    pub ordering: Option<OrderingCheck>,
    pub legacy_gap: Option<LegacyGap>,
}

/// Monte Carlo separation of the legacy baseline above the decentralized
/// controller. Both estimates share seeds, so the paired standard error is
/// the one that applies to the difference of the means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegacyGap {
    pub difference: f64,
    pub paired_stderr: f64,
    pub paired_z: f64,
    pub unpaired_stderr: f64,
    pub unpaired_z: f64,
}

impl LegacyGap {
    pub fn new(legacy: &CostReport, dec: &CostReport) -> Result<Self> {
        let (difference, paired_stderr) = legacy.paired_difference(dec)?;
        let unpaired_stderr = legacy.combined_stderr(dec);
        Ok(Self {
            difference,
            paired_stderr,
            paired_z: difference / paired_stderr,
            unpaired_stderr,
            unpaired_z: (legacy.mc_mean - dec.mc_mean) / unpaired_stderr,
        })
    }
}

impl Comparison {
    pub fn report(&self, name_prefix: &str) -> Option<&CostReport> {
        self.reports.iter().find(|r| r.architecture.starts_with(name_prefix))
    }
}

/// Synthesizes every architecture of the scenario, evaluates exact costs
/// and Monte Carlo estimates, and checks the exact-cost ordering.
pub fn compare_architectures(scenario: &Scenario) -> Result<(Comparison, Vec<NamedDesign>)> {
    scenario.validate()?;
    let model = scenario.build()?;
    let designs: Vec<NamedDesign> = scenario
        .architectures
        .iter()
        .map(|&c| synthesize(scenario, &model, c))
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(designs.len());
    let mut exact = std::collections::HashMap::new();
    for d in &designs {
        let h2 = d.exact_h2(&model.plant).map_err(|e| Error::synthesis(d.choice.key(), e))?;
        if let Some(v) = h2 {
            exact.insert(d.choice, v);
        }
        log::info!("monte carlo for {}", d.name);
        reports.push(sim::estimate_cost(
            &d.name,
            &model.plant.realization,
            d.policy(),
            scenario.monte_carlo,
            scenario.burst,
            h2,
        )?);
    }
    let reports_unsorted = reports.clone();
    reports.sort_by(|a, b| a.mc_mean.total_cmp(&b.mc_mean));
    let ordering = match (
        exact.get(&ArchitectureChoice::CenD1),
        exact.get(&ArchitectureChoice::Dec),
        exact.get(&ArchitectureChoice::Blockdiag),
    ) {
        (Some(&c), Some(&d), Some(&b)) => Some(OrderingCheck::new(c, d, b, model.delays)),
        _ => None,
    };
    let by_choice = |c: ArchitectureChoice| {
        designs
            .iter()
            .position(|d| d.choice == c)
            .map(|i| &reports_unsorted[i])
    };
    let legacy_gap = match (
        by_choice(ArchitectureChoice::Legacy),
        by_choice(ArchitectureChoice::Dec),
    ) {
        (Some(l), Some(d)) => Some(LegacyGap::new(l, d)?),
        _ => None,
    };
    Ok((
        Comparison {
            scenario: scenario.name.clone(),
            d1: model.delays.d1,
            d2: model.delays.d2,
            reports,
            ordering,
            legacy_gap,
        },
        designs,
    ))
}
