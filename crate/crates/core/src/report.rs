//! Parameter sweeps, report files and tidy plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::delay::DiscreteDelays;
use crate::error::{Error, Result};
use crate::scenario::{
    compare_architectures, synthesize, ArchitectureChoice, Comparison, NamedDesign, Scenario,
};
use crate::sim;

pub const COSTS_FILE: &str = "costs.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COSTS_TIDY_FILE: &str = "costs_tidy.csv";
pub const SWEEP_TIDY_FILE: &str = "sweep_tidy.csv";

/// Tolerance for the monotonicity verdicts.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    D2,
    RhoP,
    FirLength,
    Interburst,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::D2 => "d2",
            SweepParameter::RhoP => "rho_p",
            SweepParameter::FirLength => "fir_length",
            SweepParameter::Interburst => "interburst",
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParameter::D2,
            SweepParameter::RhoP,
            SweepParameter::FirLength,
            SweepParameter::Interburst,
        ]
        .into_iter()
        .find(|p| p.key().eq_ignore_ascii_case(s))
        .ok_or_else(|| {
            Error::param("parameter", format!("unknown `{s}`, expected d2, rho_p, fir_length or interburst"))
        })
    }
}

/// Cost of one architecture at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub architecture: ArchitectureChoice,
    pub label: String,
    pub cost: f64,
    /// Present for Monte Carlo estimates, absent for exact values.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub cells: Vec<SweepCell>,
}

impl SweepRow {
    pub fn cost(&self, arch: ArchitectureChoice) -> Option<f64> {
        self.cells.iter().find(|c| c.architecture == arch).map(|c| c.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepVerdict {
    /// What was checked, e.g. `dec non-decreasing in d2`.
    pub check: String,
    pub holds: bool,
    /// False for report-only checks.
    pub asserted: bool,
    /// `|J_dec(d1, d2max) − J_blockdiag| / J_blockdiag` for d2 sweeps.
    pub asymptote_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub architectures: Vec<ArchitectureChoice>,
    pub rows: Vec<SweepRow>,
    pub verdict: Option<SweepVerdict>,
}

fn is_monotone(values: &[f64], non_decreasing: bool) -> bool {
    values.windows(2).all(|w| {
        if non_decreasing {
            w[1] >= w[0] - MONOTONE_TOL
        } else {
            w[1] <= w[0] + MONOTONE_TOL
        }
    })
}

fn as_count(parameter: SweepParameter, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::param("grid", format!("{} takes non-negative integers, got {v}", parameter.key())))
    }
}

/// Evaluates every architecture of the scenario at each grid point, in
/// ascending order of the parameter.
///
/// Linear architectures report exact H2 values except in interburst sweeps,
/// where measurements are dropped and only Monte Carlo applies. The legacy
/// baseline is always estimated by Monte Carlo. In d2 sweeps the delay
/// triangle inequality is not enforced, so long cross delays can be studied.
pub fn sweep(scenario: &Scenario, parameter: SweepParameter, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::param("grid", "is empty"));
    }
    scenario.validate()?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut architectures = scenario.architectures.clone();
    if parameter == SweepParameter::FirLength && !architectures.contains(&ArchitectureChoice::Fir) {
        architectures.push(ArchitectureChoice::Fir);
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut sc = scenario.clone();
        sc.architectures = architectures.clone();
        let mut d2_override = None;
        match parameter {
            SweepParameter::D2 => d2_override = Some(as_count(parameter, value)?),
            SweepParameter::RhoP => sc.pzt.rho = value,
            SweepParameter::FirLength => sc.fir_length = as_count(parameter, value)?,
            SweepParameter::Interburst => {
                sc.burst.interburst_steps = as_count(parameter, value)?
            }
        }
        let mut model = sc.build()?;
        if let Some(d2) = d2_override {
            model.delays = DiscreteDelays::new(model.delays.d1, d2)?;
        }
        let monte_carlo_only = parameter == SweepParameter::Interburst;
        let mut cells = Vec::with_capacity(architectures.len());
        for &choice in &architectures {
            let design = synthesize(&sc, &model, choice)?;
            let exact = if monte_carlo_only {
                None
            } else {
                design
                    .exact_h2(&model.plant)
                    .map_err(|e| Error::synthesis(choice.key(), e))?
            };
            let cell = match exact {
                Some(cost) => SweepCell {
                    architecture: choice,
                    label: design.name.clone(),
                    cost,
                    stderr: None,
                },
                None => {
                    let r = sim::estimate_cost(
                        &design.name,
                        &model.plant.realization,
                        design.policy(),
                        sc.monte_carlo,
                        sc.burst,
                        None,
                    )?;
                    SweepCell {
                        architecture: choice,
                        label: design.name,
                        cost: r.mc_mean,
                        stderr: Some(r.mc_stderr),
                    }
                }
            };
            log::info!("{} = {value}: {} {:.10}", parameter.key(), cell.label, cell.cost);
            cells.push(cell);
        }
        rows.push(SweepRow { value, cells });
    }
    let column = |a: ArchitectureChoice| -> Option<Vec<f64>> {
        rows.iter().map(|r| r.cost(a)).collect()
    };
    let verdict = match parameter {
        SweepParameter::D2 => column(ArchitectureChoice::Dec).map(|dec| {
            let gap = rows
                .last()
                .and_then(|r| r.cost(ArchitectureChoice::Blockdiag))
                .map(|bd| (dec[dec.len() - 1] - bd).abs() / bd);
            SweepVerdict {
                check: "dec non-decreasing in d2".into(),
                holds: is_monotone(&dec, true),
                asserted: true,
                asymptote_gap: gap,
            }
        }),
        SweepParameter::FirLength => column(ArchitectureChoice::Fir).map(|fir| SweepVerdict {
            check: "fir non-increasing in fir_length".into(),
            holds: is_monotone(&fir, false),
            asserted: true,
            asymptote_gap: None,
        }),
        SweepParameter::RhoP => column(ArchitectureChoice::Dec).map(|dec| SweepVerdict {
            check: "dec non-decreasing in rho_p".into(),
            holds: is_monotone(&dec, true),
            asserted: false,
            asymptote_gap: None,
        }),
        SweepParameter::Interburst => None,
    };
    Ok(SweepResult {
        parameter,
        architectures,
        rows,
        verdict,
    })
}

impl SweepResult {
    /// Wide CSV, one row per grid point, verdict appended as `#` lines.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["parameter".to_string(), "value".to_string()];
        for a in &self.architectures {
            header.push(a.key().to_string());
            header.push(format!("{}_stderr", a.key()));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![self.parameter.key().to_string(), row.value.to_string()];
            for a in &self.architectures {
                match row.cells.iter().find(|c| c.architecture == *a) {
                    Some(c) => {
                        rec.push(c.cost.to_string());
                        rec.push(c.stderr.map(|s| s.to_string()).unwrap_or_default());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        let mut out = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .expect("csv output is utf-8");
        if let Some(v) = &self.verdict {
            let _ = writeln!(out, "# check: {}", v.check);
            let _ = writeln!(out, "# holds: {}", v.holds);
            let _ = writeln!(out, "# asserted: {}", v.asserted);
            if let Some(g) = v.asymptote_gap {
                let _ = writeln!(out, "# asymptote_gap: {g}");
            }
        }
        Ok(out)
    }
}

/// Human-readable table of a comparison.
pub fn summary_table(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} (d1 = {}, d2 = {})", c.scenario, c.d1, c.d2);
    let _ = writeln!(
        s,
        "{:<22} {:>14} {:>14} {:>12} {:>6}",
        "architecture", "exact_h2", "mc_mean", "mc_stderr", "3σ"
    );
    for r in &c.reports {
        let exact = r.exact_h2.map_or("-".into(), |v| format!("{v:.10}"));
        let ok = match r.is_consistent() {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "-",
        };
        let _ = writeln!(
            s,
            "{:<22} {:>14} {:>14.10} {:>12.3e} {:>6}",
            r.architecture, exact, r.mc_mean, r.mc_stderr, ok
        );
    }
    if let Some(o) = &c.ordering {
        let _ = writeln!(
            s,
            "ordering cen_d1 <= dec <= blockdiag ({}): {} (margin {:.3e})",
            if o.strict { "strict" } else { "non-strict" },
            if o.holds { "holds" } else { "VIOLATED" },
            o.margin
        );
    }
    if let Some(g) = &c.legacy_gap {
        let _ = writeln!(
            s,
            "legacy - dec = {:.6} (paired z {:.2}, unpaired z {:.2})",
            g.difference, g.paired_z, g.unpaired_z
        );
    }
    s
}

/// Writes `costs.json` and `summary.txt` into `dir`.
pub fn write_comparison(dir: &Path, c: &Comparison) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(COSTS_FILE), serde_json::to_string_pretty(c)? + "\n")?;
    fs::write(dir.join(SUMMARY_FILE), summary_table(c))?;
    Ok(())
}

/// Writes one closed-loop trace per design into `dir/traces`.
pub fn write_traces(dir: &Path, scenario: &Scenario, designs: &[NamedDesign]) -> Result<Vec<PathBuf>> {
    let model = scenario.build()?;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let mut written = Vec::with_capacity(designs.len());
    for d in designs {
        let tr = sim::simulate(
            &model.plant.realization,
            d.policy(),
            scenario.trace_steps,
            scenario.monte_carlo.base_seed,
            scenario.burst,
        )?;
        let path = traces.join(format!("{}.csv", d.name));
        tr.write_csv(fs::File::create(&path)?, Some(&model.cost.wavelength_row))?;
        written.push(path);
    }
    Ok(written)
}

/// Full run: comparison, `costs.json`, `summary.txt` and traces.
pub fn run(scenario: &Scenario, dir: &Path) -> Result<Comparison> {
    let (comparison, designs) = compare_architectures(scenario)?;
    write_comparison(dir, &comparison)?;
    write_traces(dir, scenario, &designs)?;
    Ok(comparison)
}

#[derive(Serialize)]
struct CostTidyRow<'a> {
    architecture: &'a str,
    parameter: &'a str,
    value: &'a str,
    exact_h2: Option<f64>,
    mc_mean: f64,
    mc_stderr: f64,
}

#[derive(Debug, Serialize, PartialEq)]
struct SweepTidyRow {
    parameter: String,
    value: f64,
    architecture: String,
    cost: f64,
    stderr: Option<f64>,
}

fn tidy_sweep(text: &str) -> Result<Vec<SweepTidyRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::param("sweep.csv", format!("not a number: `{s}`")))
        };
        let parameter = rec.get(0).unwrap_or_default().to_string();
        let value = num(rec.get(1).unwrap_or_default())?;
        for k in (2..header.len()).step_by(2) {
            let cost = rec.get(k).unwrap_or_default();
            if cost.is_empty() {
                continue;
            }
            let stderr = rec.get(k + 1).unwrap_or_default();
            rows.push(SweepTidyRow {
                parameter: parameter.clone(),
                value,
                architecture: header[k].to_string(),
                cost: num(cost)?,
                stderr: if stderr.is_empty() { None } else { Some(num(stderr)?) },
            });
        }
    }
    rows.sort_by(|a, b| {
        a.parameter
            .cmp(&b.parameter)
            .then(a.value.total_cmp(&b.value))
            .then(a.architecture.cmp(&b.architecture))
    });
    Ok(rows)
}

/// Reshapes the reports found in `dir` into long-format CSV tables and
/// returns the files written.
pub fn emit_plotdata(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let costs = dir.join(COSTS_FILE);
    if costs.is_file() {
        let c: Comparison = serde_json::from_str(&fs::read_to_string(&costs)?)?;
        let path = dir.join(COSTS_TIDY_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for r in &c.reports {
            w.serialize(CostTidyRow {
                architecture: &r.architecture,
                parameter: "scenario",
                value: &c.scenario,
                exact_h2: r.exact_h2,
                mc_mean: r.mc_mean,
                mc_stderr: r.mc_stderr,
            })?;
        }
        w.flush()?;
        written.push(path);
    }
    let sweep = dir.join(SWEEP_FILE);
    if sweep.is_file() {
        let rows = tidy_sweep(&fs::read_to_string(&sweep)?)?;
        let path = dir.join(SWEEP_TIDY_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(Error::NothingToEmit(dir.display().to_string()));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_checks_respect_tolerance() {
        assert!(is_monotone(&[1.0, 1.0 - 5e-10, 2.0], true));
        assert!(!is_monotone(&[1.0, 0.9], true));
        assert!(is_monotone(&[3.0, 2.0, 2.0 + 5e-10], false));
    }

    #[test]
    fn tidy_sweep_sorts_and_skips_blank_cells() {
        let text = "parameter,value,dec,dec_stderr,legacy,legacy_stderr\n\
                    d2,4,0.2,,0.5,0.01\n\
                    d2,3,0.1,,,\n\
                    # holds: true\n";
        let rows = tidy_sweep(text).unwrap();
        let got: Vec<(f64, &str)> = rows.iter().map(|r| (r.value, r.architecture.as_str())).collect();
        assert_eq!(got, vec![(3.0, "dec"), (4.0, "dec"), (4.0, "legacy")]);
        assert_eq!(rows[2].stderr, Some(0.01));
        assert_eq!(rows[0].stderr, None);
    }

    #[test]
    fn parameters_parse_case_insensitively() {
        assert_eq!("rho_P".parse::<SweepParameter>().unwrap(), SweepParameter::RhoP);
        assert!("tau".parse::<SweepParameter>().is_err());
    }
}
