//! Run descriptions: a TOML document with `[mesh]`, `[material]`,
//! `[integrator]`, `[pulse]`, `[output]` and optional `[scaling]` sections.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vme_core::{
    BoundaryConditions, DnsIntegrator, EndCondition, InitialPulse, IntegratorConfig,
    Microstructure, Relaxation, Scaling, Scheme,
};

use crate::error::CliError;

/// Which solvers a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Vme,
    Dns,
    Both,
}

impl SolverChoice {
    pub fn runs_vme(self) -> bool {
        self != SolverChoice::Dns
    }

    pub fn runs_dns(self) -> bool {
        self != SolverChoice::Vme
    }
}

/// A validated run description in nondimensional units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub solver: SolverChoice,
    pub n_es: usize,
    pub n_ecp: usize,
    pub n_ef: usize,
    /// Element count of the single-scale reference grid.
    pub n_el: usize,
    pub bc: BoundaryConditions,
    pub microstructure: Microstructure,
    pub integrator: IntegratorConfig,
    pub dns_integrator: DnsIntegrator,
    pub dns_cfl: f64,
    pub pulse: InitialPulse,
    pub end_time: f64,
    pub output_times: Vec<f64>,
    pub land_on_outputs: bool,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    /// Present when the inputs were given in physical units.
    pub scaling: Option<Scaling>,
}

pub const DEFAULT_N_ES: usize = 100;
pub const DEFAULT_N_ECP: usize = 1;
pub const DEFAULT_N_EF: usize = 8;
pub const DEFAULT_N_EL: usize = 800;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    solver: Option<SolverChoice>,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    material: RawMaterial,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    pulse: RawPulse,
    #[serde(default)]
    output: RawOutput,
    scaling: Option<RawScaling>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    n_es: Option<usize>,
    n_ecp: Option<usize>,
    n_ef: Option<usize>,
    n_el: Option<usize>,
    left: Option<EndCondition>,
    right: Option<EndCondition>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    contrast: Option<f64>,
    fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    scheme: Option<Scheme>,
    cfl: Option<f64>,
    p: Option<f64>,
    tol_c: Option<f64>,
    tol_f: Option<f64>,
    tol_newton: Option<f64>,
    max_split_iters: Option<usize>,
    max_newton_iters: Option<usize>,
    denom_floor: Option<f64>,
    relaxation: Option<Relaxation>,
    coarse_only: Option<bool>,
    dns: Option<DnsIntegrator>,
    dns_cfl: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    amplitude: Option<f64>,
    width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    end_time: Option<f64>,
    times: Option<Vec<f64>>,
    land_on_outputs: Option<bool>,
    dir: Option<PathBuf>,
    workers: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaling {
    length: f64,
    modulus: f64,
    density: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn positive(problems: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("{name} must be positive, got {v}"));
    }
}

/// Parse and validate a run description, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut problems = Vec::new();

    let n_es = raw.mesh.n_es.unwrap_or(DEFAULT_N_ES);
    let n_ecp = raw.mesh.n_ecp.unwrap_or(DEFAULT_N_ECP);
    let n_ef = raw.mesh.n_ef.unwrap_or(DEFAULT_N_EF);
    let n_el = raw.mesh.n_el.unwrap_or(DEFAULT_N_EL);
    if n_es == 0 {
        problems.push("mesh.n_es must be at least 1".into());
    }
    if n_ecp == 0 {
        problems.push("mesh.n_ecp must be at least 1".into());
    }
    if n_ef == 0 {
        problems.push("mesh.n_ef must be at least 1".into());
    } else if n_ecp > 0 && n_ef % n_ecp != 0 {
        problems.push(format!(
            "mesh.n_ef ({n_ef}) must be a multiple of mesh.n_ecp ({n_ecp})"
        ));
    }
    if n_el == 0 {
        problems.push("mesh.n_el must be at least 1".into());
    } else if n_es > 0 && n_el % n_es != 0 {
        problems.push(format!(
            "mesh.n_el ({n_el}) must be a multiple of mesh.n_es ({n_es})"
        ));
    }
    let bc = BoundaryConditions {
        left: raw.mesh.left.unwrap_or_default(),
        right: raw.mesh.right.unwrap_or_default(),
    };

    let contrast = raw.material.contrast.unwrap_or(1.0);
    let fraction = raw.material.fraction.unwrap_or(0.5);
    positive(&mut problems, "material.contrast", contrast);
    if !(fraction > 0.0 && fraction < 1.0) {
        problems.push(format!(
            "material.fraction must lie in (0, 1), got {fraction}"
        ));
    } else {
        let mut conforms = |name: &str, per_cell: usize| {
            let k = fraction * per_cell as f64;
            if per_cell > 0 && (k - k.round()).abs() > 1e-9 {
                problems.push(format!(
                    "material.fraction ({fraction}) does not fall on an element boundary with {per_cell} {name} elements per cell"
                ));
            }
        };
        conforms("fine", n_ef);
        if n_es > 0 && n_el % n_es == 0 {
            conforms("reference", n_el / n_es);
        }
    }

    let scheme = raw.integrator.scheme.unwrap_or(Scheme::EeSsm);
    let cfl = match raw.integrator.cfl {
        Some(c) => c,
        None => {
            problems.push("integrator.cfl is required".into());
            1.0
        }
    };
    let mut integrator = IntegratorConfig::new(scheme, cfl);
    let ri = &raw.integrator;
    integrator.p = ri.p.unwrap_or(integrator.p);
    integrator.tol_c = ri.tol_c.unwrap_or(integrator.tol_c);
    integrator.tol_f = ri.tol_f.unwrap_or(integrator.tol_f);
    integrator.tol_newton = ri.tol_newton.unwrap_or(integrator.tol_newton);
    integrator.max_split_iters = ri.max_split_iters.unwrap_or(integrator.max_split_iters);
    integrator.max_newton_iters = ri.max_newton_iters.unwrap_or(integrator.max_newton_iters);
    integrator.denom_floor = ri.denom_floor.unwrap_or(integrator.denom_floor);
    integrator.relaxation = ri.relaxation.unwrap_or(integrator.relaxation);
    integrator.coarse_only = ri.coarse_only.unwrap_or(false);
    problems.extend(
        integrator
            .problems()
            .into_iter()
            .map(|p| format!("integrator.{p}")),
    );
    let dns_integrator = ri.dns.unwrap_or(match scheme {
        Scheme::EeCdm => DnsIntegrator::Cdm,
        Scheme::EeSsm | Scheme::EiSsm => DnsIntegrator::SubStep,
    });
    let dns_cfl = ri.dns_cfl.unwrap_or(cfl);
    positive(&mut problems, "integrator.dns_cfl", dns_cfl);

    let scaling = match &raw.scaling {
        Some(s) => match Scaling::new(s.length, s.modulus, s.density) {
            Ok(s) => Some(s),
            Err(e) => {
                problems.push(format!("scaling: {e}"));
                None
            }
        },
        None => None,
    };
    let to_length = |x: f64| scaling.map_or(x, |s| s.length_to_unit(x));
    let to_time = |t: f64| scaling.map_or(t, |s| s.time_to_unit(t));

    let amplitude = to_length(raw.pulse.amplitude.unwrap_or(0.04));
    let width = to_length(raw.pulse.width.unwrap_or(0.05));
    let pulse = match InitialPulse::new(amplitude, width) {
        Ok(p) => p,
        Err(e) => {
            problems.push(format!("pulse: {e}"));
            InitialPulse {
                amplitude: 0.0,
                width: 1.0,
            }
        }
    };

    let end_time = to_time(raw.output.end_time.unwrap_or(0.3));
    if !(end_time >= 0.0 && end_time.is_finite()) {
        problems.push(format!(
            "output.end_time must be non-negative, got {end_time}"
        ));
    }
    let mut output_times: Vec<f64> = match &raw.output.times {
        Some(ts) => ts.iter().map(|&t| to_time(t)).collect(),
        None => vec![end_time],
    };
    for &t in &output_times {
        if !(t >= 0.0 && t <= end_time) {
            problems.push(format!(
                "output time {t} lies outside [0, end_time = {end_time}]"
            ));
        }
    }
    output_times.sort_by(f64::total_cmp);
    output_times.dedup();
    let workers = raw.output.workers;
    if workers == Some(0) {
        problems.push("output.workers must be at least 1".into());
    }

    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    Ok(RunConfig {
        solver: raw.solver.unwrap_or_default(),
        n_es,
        n_ecp,
        n_ef,
        n_el,
        bc,
        microstructure: Microstructure { contrast, fraction },
        integrator,
        dns_integrator,
        dns_cfl,
        pulse,
        end_time,
        output_times,
        land_on_outputs: raw.output.land_on_outputs.unwrap_or(false),
        output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        workers,
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("[integrator]\ncfl = 1.0\n").unwrap();
        assert_eq!((c.n_es, c.n_ecp, c.n_ef, c.n_el), (100, 1, 8, 800));
        assert_eq!(c.integrator.p, 0.54);
        assert_eq!(c.integrator.tol_c, 1e-3);
        assert_eq!(c.integrator.tol_f, 1e-3);
        assert_eq!(c.integrator.tol_newton, 1e-10);
        assert_eq!(c.integrator.scheme, Scheme::EeSsm);
        assert_eq!(c.dns_integrator, DnsIntegrator::SubStep);
        assert_eq!(c.solver, SolverChoice::Vme);
        assert_eq!(c.output_times, vec![0.3]);
        assert_eq!(c.microstructure.contrast, 1.0);
    }

    #[test]
    fn missing_cfl_is_a_validation_error() {
        match parse_config("[mesh]\nn_es = 10\n") {
            Err(CliError::Validation(p)) => {
                assert_eq!(p, vec!["integrator.cfl is required".to_string()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let text =
            "[mesh]\nn_ef = 7\nn_ecp = 2\n[integrator]\ncfl = -1\np = 1.5\n[pulse]\nwidth = 0\n";
        match parse_config(text) {
            Err(CliError::Validation(p)) => {
                let all = p.join("\n");
                assert!(all.contains("multiple of mesh.n_ecp"), "{all}");
                assert!(all.contains("cfl must be positive"), "{all}");
                assert!(all.contains("p must lie in (0, 1)"), "{all}");
                assert!(all.contains("width must be positive"), "{all}");
                assert!(all.contains("fraction (0.5) does not fall"), "{all}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        match parse_config("[integrator]\ncfl = 1.0\nscheme = \"rk4\"\n") {
            Err(CliError::Parse { line, message }) => {
                assert_eq!(line, Some(3));
                assert!(message.contains("rk4"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("[integrator]\ncfl = 1.0\n[mesh]\nn_es = \"ten\"\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, Some(4)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_config("[integrator]\ncfl = 1.0\nbogus = 1\n"),
            Err(CliError::Parse { line: Some(3), .. })
        ));
    }

    #[test]
    fn scaled_inputs_become_nondimensional() {
        let text = "[integrator]\ncfl = 1.0\n[pulse]\namplitude = 0.08\nwidth = 0.1\n\
                    [output]\nend_time = 0.1\ntimes = [0.05, 0.1]\n\
                    [scaling]\nlength = 2.0\nmodulus = 16.0\ndensity = 1.0\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.pulse, InitialPulse::new(0.04, 0.05).unwrap());
        assert_eq!(c.end_time, 0.2);
        assert_eq!(c.output_times, vec![0.1, 0.2]);
    }

    #[test]
    fn output_times_are_checked() {
        let text = "[integrator]\ncfl = 1.0\n[output]\nend_time = 0.1\ntimes = [0.2]\n";
        assert!(matches!(parse_config(text), Err(CliError::Validation(_))));
    }
}
