use std::sync::Arc;

use fedsink_core::container::{instance_from_container, Container};
use fedsink_core::synth::GenSpec;
use fedsink_core::{Problem, StopPolicy};
use fedsink_fed::Backend;
use fedsink_finrisk::RiskSpec;
use ndarray::array;
use serde_json::{json, Value};

use crate::config::{ConfigError, EpsilonStudySpec, ExperimentConfig, FedSettings, InstanceSource, Mode};

/// The 4×4 instance of the regularization study.
pub fn toy_problem(epsilon: f64) -> Result<Problem<f64>, fedsink_core::OtError> {
    let c = array![[0., 1., 2., 3.], [1., 0., 3., 2.], [2., 3., 0., 1.], [3., 2., 1., 0.]];
    Problem::single(c, array![0.3, 0.2, 0.1, 0.4], array![0.2, 0.3, 0.3, 0.2], epsilon)
}

#[derive(Debug, Clone)]
pub enum Instance {
    Generate(GenSpec),
    Fixed { problem: Arc<Problem<f64>>, label: Value },
}

impl Instance {
    pub fn dim(&self) -> usize {
        match self {
            Instance::Generate(g) => g.n,
            Instance::Fixed { problem, .. } => problem.dim(),
        }
    }

    pub fn gen_spec(&self) -> Option<&GenSpec> {
        match self {
            Instance::Generate(g) => Some(g),
            Instance::Fixed { .. } => None,
        }
    }
}

/// One cell of the experiment grid; each is run `repetitions` times.
#[derive(Debug, Clone)]
pub struct RunPoint {
    pub mode: Mode,
    pub instance: Instance,
    pub fed: FedSettings,
}

#[derive(Debug, Clone)]
pub enum Plan {
    Runs(Vec<RunPoint>),
    Risk { spec: RiskSpec, driver: Mode },
    EpsilonStudy { instance: InstanceSource, study: EpsilonStudySpec },
}

#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub plan: Plan,
}

/// Checks everything that can be checked before the first run starts.
pub fn validate(config: ExperimentConfig, source: Option<&str>) -> Result<Validated, ConfigError> {
    let mode = config.mode.ok_or_else(|| ConfigError::new("`mode` is required").at_key(source, "mode"))?;
    if config.repetitions == 0 {
        return Err(ConfigError::new("repetitions must be at least 1").at_key(source, "repetitions"));
    }
    let plan = match mode {
        Mode::Finrisk => {
            let risk = config.risk.as_ref().ok_or_else(|| ConfigError::new("finrisk mode needs `risk`"))?;
            let spec = risk.load().map_err(|e| ConfigError::new(format!("risk: {e}")).at_key(source, "risk"))?;
            spec.validate().map_err(|e| ConfigError::new(e.to_string()).at_key(source, "risk"))?;
            if !config.risk_driver.is_solver() {
                return Err(ConfigError::new("risk_driver must be a solver mode").at_key(source, "risk_driver"));
            }
            if let Some(t) = config.risk_driver.topology() {
                check_backend(&config.backend, &config.fed, source)?;
                config.fed.params(t, config.seed).validate(spec.n()).map_err(|e| fed_error(e, source))?;
            }
            Plan::Risk { spec, driver: config.risk_driver }
        }
        Mode::EpsilonStudy => {
            let study = config.epsilon_study.clone().unwrap_or_default();
            if study.epsilons.is_empty() || study.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(ConfigError::new("epsilons must be a nonempty list of positive numbers")
                    .at_key(source, "epsilons"));
            }
            if !(study.tolerance > 0.0) {
                return Err(ConfigError::new("tolerance must be positive").at_key(source, "tolerance"));
            }
            study.stop.validate().map_err(|e| ConfigError::new(e).at_key(source, "stop"))?;
            let instance = config.instance.clone().unwrap_or(InstanceSource::Toy { epsilon: study.epsilons[0] });
            resolve(&instance, source)?;
            Plan::EpsilonStudy { instance, study }
        }
        Mode::Sweep => {
            let sweep = config.sweep.clone().unwrap_or_default();
            if sweep.modes.is_empty() || sweep.modes.iter().any(|m| !m.is_solver()) {
                return Err(ConfigError::new("sweep.modes must list solver modes").at_key(source, "modes"));
            }
            let base = base_instance(&config, source)?;
            let generated = base.gen_spec().is_some();
            if !generated
                && !(sweep.n.is_empty()
                    && sweep.targets.is_empty()
                    && sweep.sparsity_s.is_empty()
                    && sweep.cond_class.is_empty())
            {
                return Err(ConfigError::new("instance axes need a generated instance").at_key(source, "sweep"));
            }
            let mut points: Vec<RunPoint> = sweep
                .modes
                .iter()
                .map(|&mode| RunPoint { mode, instance: base.clone(), fed: config.fed.clone() })
                .collect();
            fn expand<T: Clone>(points: Vec<RunPoint>, axis: &[T], set: impl Fn(&mut RunPoint, T)) -> Vec<RunPoint> {
                if axis.is_empty() {
                    return points;
                }
                let mut out = Vec::with_capacity(points.len() * axis.len());
                for p in points {
                    for v in axis {
                        let mut q = p.clone();
                        set(&mut q, v.clone());
                        out.push(q);
                    }
                }
                out
            }
            fn spec_mut(p: &mut RunPoint) -> &mut GenSpec {
                match &mut p.instance {
                    Instance::Generate(g) => g,
                    Instance::Fixed { .. } => unreachable!("checked above"),
                }
            }
            points = expand(points, &sweep.n, |p, v| spec_mut(p).n = v);
            points = expand(points, &sweep.targets, |p, v| spec_mut(p).targets = v);
            points = expand(points, &sweep.sparsity_s, |p, v| spec_mut(p).sparsity = v);
            points = expand(points, &sweep.cond_class, |p, v| spec_mut(p).cond_class = v);
            points = expand(points, &sweep.c, |p, v| p.fed.c = v);
            points = expand(points, &sweep.w, |p, v| p.fed.w = v);
            points = expand(points, &sweep.alpha, |p, v| p.fed.alpha = v);
            points = expand(points, &sweep.threshold, |p, v| p.fed.stop.threshold = v);
            points = expand(points, &sweep.timeout, |p, v| p.fed.stop.timeout = Some(v));
            for p in &points {
                check_point(p, &config, source)?;
            }
            Plan::Runs(points)
        }
        solver => {
            let point = RunPoint { mode: solver, instance: base_instance(&config, source)?, fed: config.fed.clone() };
            check_point(&point, &config, source)?;
            Plan::Runs(vec![point])
        }
    };
    Ok(Validated { config, plan })
}

fn fed_error(e: fedsink_fed::FedError, source: Option<&str>) -> ConfigError {
    ConfigError::new(e.to_string()).at_key(source, "fed")
}

fn check_backend(backend: &Backend, fed: &FedSettings, source: Option<&str>) -> Result<(), ConfigError> {
    if let Backend::Tcp { peers } = backend {
        if !matches!(fed.delay, fedsink_net::DelayModel::Zero) {
            return Err(ConfigError::new("simulated delays are only available on the sim backend")
                .at_key(source, "delay"));
        }
        if !peers.is_empty() && peers.len() < fed.c {
            return Err(ConfigError::new(format!("{} peers listed for {} clients", peers.len(), fed.c))
                .at_key(source, "peers"));
        }
    }
    Ok(())
}

fn check_point(p: &RunPoint, config: &ExperimentConfig, source: Option<&str>) -> Result<(), ConfigError> {
    if let Some(g) = p.instance.gen_spec() {
        g.validate().map_err(|e| ConfigError::new(e.to_string()).at_key(source, "instance"))?;
    }
    match p.mode.topology() {
        Some(t) => {
            check_backend(&config.backend, &p.fed, source)?;
            p.fed.params(t, config.seed).validate(p.instance.dim()).map_err(|e| fed_error(e, source))
        }
        None => validate_stop(&p.fed.stop, source),
    }
}

fn validate_stop(stop: &StopPolicy, source: Option<&str>) -> Result<(), ConfigError> {
    stop.validate().map_err(|e| ConfigError::new(e).at_key(source, "stop"))
}

fn base_instance(config: &ExperimentConfig, source: Option<&str>) -> Result<Instance, ConfigError> {
    let src = config
        .instance
        .as_ref()
        .ok_or_else(|| ConfigError::new("`instance` is required for solver runs (or pass --n)"))?;
    resolve(src, source)
}

pub fn resolve(src: &InstanceSource, source: Option<&str>) -> Result<Instance, ConfigError> {
    let at = |e: String| ConfigError::new(e).at_key(source, "instance");
    Ok(match src {
        InstanceSource::Generate(g) => {
            g.validate().map_err(|e| at(e.to_string()))?;
            Instance::Generate(g.clone())
        }
        InstanceSource::Path(path) => {
            let c = Container::load(path).map_err(|e| at(format!("{}: {e}", path.display())))?;
            let problem = instance_from_container(&c).map_err(|e| at(format!("{}: {e}", path.display())))?;
            Instance::Fixed { problem: Arc::new(problem), label: json!({ "path": path }) }
        }
        InstanceSource::Toy { epsilon } => {
            let problem = toy_problem(*epsilon).map_err(|e| at(e.to_string()))?;
            Instance::Fixed { problem: Arc::new(problem), label: json!({ "toy": { "epsilon": epsilon } }) }
        }
    })
}
