//! Named scenario builders behind the CLI.

use combclassic_core::comb::{comb_from_dilation, Comb, Dilation};
use combclassic_core::models::{
    appendix_d_dilation, appendix_g_dilation, dephasing_comb, genuinely_quantum_process,
    lorentzian_kernel, TauE,
};
use combclassic_core::tensor::{C64, ComplexMatrix};

#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub gamma: f64,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub t0: Option<f64>,
    pub tau_e: TauE,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            gamma: 0.5,
            alpha: 1.0,
            times: vec![0.0, 1.0, 2.0],
            t0: None,
            tau_e: TauE::MaximallyMixed,
        }
    }
}

pub enum Scenario {
    /// Comb plus the underlying dilation where one exists.
    WithDilation(Comb, Dilation),
    CombOnly(Comb),
}

impl Scenario {
    pub fn comb(&self) -> &Comb {
        match self {
            Scenario::WithDilation(c, _) => c,
            Scenario::CombOnly(c) => c,
        }
    }

    pub fn dilation(&self) -> Option<&Dilation> {
        match self {
            Scenario::WithDilation(_, d) => Some(d),
            Scenario::CombOnly(_) => None,
        }
    }
}

pub fn build(name: &str, params: &ScenarioParams) -> Result<Scenario, String> {
    match name {
        "appendix-d" => {
            let d = appendix_d_dilation();
            let c = comb_from_dilation(&d).map_err(|e| e.to_string())?;
            Ok(Scenario::WithDilation(c, d))
        }
        "appendix-g" => {
            let d = appendix_g_dilation();
            let c = comb_from_dilation(&d).map_err(|e| e.to_string())?;
            Ok(Scenario::WithDilation(c, d))
        }
        "genuinely-quantum" => {
            let d = genuinely_quantum_process(params.tau_e);
            let c = comb_from_dilation(&d).map_err(|e| e.to_string())?;
            Ok(Scenario::WithDilation(c, d))
        }
        "example1" => {
            let kernel = lorentzian_kernel(params.gamma).map_err(|e| e.to_string())?;
            let a = params.alpha;
            if !(0.0..=1.0).contains(&a) {
                return Err("alpha must lie in [0, 1]".to_string());
            }
            // alpha |+><+| + (1-alpha) |-><-| in the z basis
            let off = a - 0.5;
            let rho0 = {
                let mut m = ComplexMatrix::zeros(2, 2);
                m[(0, 0)] = C64::new(0.5, 0.0);
                m[(1, 1)] = C64::new(0.5, 0.0);
                m[(0, 1)] = C64::new(off, 0.0);
                m[(1, 0)] = C64::new(off, 0.0);
                m
            };
            let t0 = params.t0.unwrap_or_else(|| params.times.first().copied().unwrap_or(0.0));
            let comb = dephasing_comb(&kernel, t0, &params.times, &rho0)
                .map_err(|e| e.to_string())?;
            Ok(Scenario::CombOnly(comb))
        }
        other => Err(format!(
            "unknown scenario {:?}; expected example1, appendix-d, appendix-g, or genuinely-quantum",
            other
        )),
    }
}

pub const SCENARIO_NAMES: &[&str] =
    &["example1", "appendix-d", "appendix-g", "genuinely-quantum"];
