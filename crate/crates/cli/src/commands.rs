use qfilter_core::fidelity::{evaluate, universal_first_order, VALIDITY_THRESHOLD};
use qfilter_core::filter::{cp_locations, log_grid, suppression_order, udd_locations, FilterFunction, LocationRule};
use qfilter_core::montecarlo::ensemble_fidelity;
use qfilter_core::noise::smallness_xi;
use qfilter_core::schema::SequenceSpec;
use serde::Serialize;
use serde_json::json;

use crate::config::{NoiseConvention, NoiseRecord, Resolved};
use crate::output::{csv, fmt_f64, json, Cell, OutDir};
use crate::CliError;

pub const FILTER_COLUMNS: [&str; 5] = ["omega", "omega_t", "F_x", "F_y", "F_z"];
pub const COMPARE_COLUMNS: [&str; 6] = [
    "tau",
    "xi_sq",
    "analytic_infidelity",
    "mc_infidelity",
    "mc_stderr",
    "valid",
];

const BRIDGE_NOTE: &str = "noise given for H = β σ/2 was mapped to H = β·σ by S_lib = S/4 (δβ_lib = δβ/2)";

pub struct Run {
    pub cfg: Resolved,
    pub out: OutDir,
    pub stem: String,
}

#[derive(Serialize)]
struct NoiseMeta<'a> {
    axes: &'a [NoiseRecord],
    #[serde(skip_serializing_if = "Option::is_none")]
    bridge: Option<&'static str>,
}

impl Run {
    fn noise_meta(&self) -> NoiseMeta<'_> {
        let bridged = self
            .cfg
            .noise_records
            .iter()
            .any(|r| r.convention == NoiseConvention::Half);
        NoiseMeta {
            axes: &self.cfg.noise_records,
            bridge: bridged.then_some(BRIDGE_NOTE),
        }
    }

    pub fn filter(&self) -> Result<(), CliError> {
        let spec = self.cfg.sequence()?;
        let g = &self.cfg.grid;
        if !(g.lo > 0.0 && g.hi > g.lo && g.per_decade > 0) {
            return Err(CliError::Config("grid: need 0 < lo < hi and per_decade > 0".into()));
        }
        let built = spec.build(g.precision)?;
        let omega = log_grid(g.lo, g.hi, g.per_decade, built.time_unit);
        let ff = FilterFunction::sample(&*built.spectral, &omega, built.time_unit, built.provenance);
        let fit = suppression_order(&ff, g.fit_axis.index(), (g.fit_window[0], g.fit_window[1]))?;

        let rows: Vec<Vec<Cell>> = (0..omega.len())
            .map(|k| {
                let mut row = vec![Cell::Num(omega[k]), Cell::Num(omega[k] * built.time_unit)];
                row.extend((0..3).map(|i| Cell::Num(ff.values[i][k])));
                row
            })
            .collect();
        let meta = json!({
            "command": "filter",
            "sequence": spec,
            "hash": spec.hash(),
            "precision": g.precision,
            "provenance": built.provenance,
            "time_unit": built.time_unit,
            "grid": g,
            "fit": fit,
            "columns": FILTER_COLUMNS,
        });
        let data = self
            .out
            .write(&format!("{}.csv", self.stem), &csv(&FILTER_COLUMNS, &rows))?;
        self.out.write(&format!("{}.json", self.stem), &json(&meta)?)?;
        println!(
            "alpha = {} ({} dB/octave) on axis {:?}; {} samples in {}",
            fmt_f64(fit.alpha),
            fmt_f64(fit.rolloff_db_per_octave),
            g.fit_axis,
            omega.len(),
            data.display()
        );
        Ok(())
    }

    pub fn fidelity(&self) -> Result<(), CliError> {
        let spec = self.cfg.sequence()?;
        let built = spec.build(self.cfg.grid.precision)?;
        let report = evaluate(
            &*built.spectral,
            built.time_domain().ok(),
            &self.cfg.noise,
            &self.cfg.fidelity.options(),
        )?;
        let doc = json!({
            "command": "fidelity",
            "sequence": spec,
            "hash": spec.hash(),
            "noise": self.noise_meta(),
            "report": report,
        });
        let text = json(&doc)?;
        self.out.write(&format!("{}.json", self.stem), &text)?;
        print!("{text}");
        Ok(())
    }

    pub fn simulate(&self) -> Result<(), CliError> {
        let spec = self.cfg.sequence()?;
        let built = spec.build(self.cfg.grid.precision)?;
        let seq = built.time_domain()?;
        let result = ensemble_fidelity(seq, &self.cfg.noise, &self.cfg.ensemble)?;
        let doc = json!({
            "command": "simulate",
            "sequence": spec,
            "hash": spec.hash(),
            "noise": self.noise_meta(),
            "ensemble": self.cfg.ensemble,
            "result": result,
        });
        let text = json(&doc)?;
        self.out.write(&format!("{}.json", self.stem), &text)?;
        print!("{text}");
        Ok(())
    }

    pub fn compare(&self) -> Result<(), CliError> {
        let template = self.cfg.sequence()?;
        let parameter = sweep_parameter(template)?;
        let points = self.cfg.sweep.points()?;
        let noise = &self.cfg.noise;
        let mut rows = Vec::with_capacity(points.len());
        for &tau in &points {
            let spec = with_duration(template, tau);
            let built = spec.build(self.cfg.grid.precision)?;
            let analytic = universal_first_order(&*built.spectral, noise)?.total;
            let xi_sq = smallness_xi(noise, built.spectral.total_time()).powi(2);
            let mc = ensemble_fidelity(built.time_domain()?, noise, &self.cfg.ensemble)?;
            log::info!(
                "{parameter} = {tau}: analytic {analytic:e}, MC {:e} ± {:e}",
                mc.infidelity(),
                mc.stderr
            );
            rows.push(vec![
                Cell::Num(tau),
                Cell::Num(xi_sq),
                Cell::Num(analytic),
                Cell::Num(mc.infidelity()),
                Cell::Num(mc.stderr),
                Cell::Bool(xi_sq < VALIDITY_THRESHOLD),
            ]);
        }
        let meta = json!({
            "command": "compare",
            "sequence": template,
            "hash": template.hash(),
            "sweep_parameter": parameter,
            "noise": self.noise_meta(),
            "ensemble": self.cfg.ensemble,
            "analytic": "first-order ⟨a1²⟩ from the frequency-domain overlap",
            "validity_threshold": VALIDITY_THRESHOLD,
            "columns": COMPARE_COLUMNS,
        });
        let data = self
            .out
            .write(&format!("{}.csv", self.stem), &csv(&COMPARE_COLUMNS, &rows))?;
        self.out.write(&format!("{}.json", self.stem), &json(&meta)?)?;
        println!("{} sweep points in {}", rows.len(), data.display());
        Ok(())
    }
}

fn sweep_parameter(spec: &SequenceSpec) -> Result<&'static str, CliError> {
    match spec {
        SequenceSpec::Pulse { .. } => Ok("tau_pi"),
        SequenceSpec::Dd { .. } => Ok("total_time"),
        SequenceSpec::Free { .. } => Ok("duration"),
        SequenceSpec::Segments { .. } => Err(CliError::Config(
            "sweep: segment lists have no single duration parameter".into(),
        )),
    }
}

/// The template with its duration set to `tau`; DD pulse widths scale along.
fn with_duration(spec: &SequenceSpec, tau: f64) -> SequenceSpec {
    let mut s = spec.clone();
    match &mut s {
        SequenceSpec::Pulse { tau_pi, .. } => *tau_pi = tau,
        SequenceSpec::Free { duration } => *duration = tau,
        SequenceSpec::Dd {
            total_time,
            pulse_width,
            ..
        } => {
            *pulse_width *= tau / *total_time;
            *total_time = tau;
        }
        SequenceSpec::Segments { .. } => {}
    }
    s
}

pub fn locations(rule: LocationRule, n: usize) -> Result<(), CliError> {
    let locs = match rule {
        LocationRule::Cp => cp_locations(n),
        LocationRule::Udd => udd_locations(n),
        LocationRule::Custom => return Err(CliError::Config("custom locations are given, not generated".into())),
    };
    for l in locs {
        println!("{}", fmt_f64(l));
    }
    Ok(())
}
