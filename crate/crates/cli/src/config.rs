//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` are comments. Every key is optional except
//! `domain.shape` and `prescription.kind`; [`RunConfig::to_text`] writes all
//! keys back out, defaults included, so a serialized config is canonical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use pmc_core::elliptic::SolverChoice;
use pmc_core::fixed_point::IterationConfig;
use pmc_core::grid::{Domain, DomainSpec};
use pmc_core::norms::{derive_q, SobolevParams};
use pmc_core::prescription::PrescriptionSpec;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn err<T>(key: &str, reason: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { key: key.to_string(), reason: reason.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseSpec {
    None,
    /// `h(x) = a·x + b`.
    Affine { slope: Vec<f64>, offset: f64 },
    /// `h(x) = log(cos(k x₁)/cos(k x₂))/k`, minimal for every `k > 0`.
    Scherk { scale: f64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundarySpec {
    Zero,
    Affine { slope: Vec<f64>, offset: f64 },
    /// Trace of the lower spherical cap `−√(R² − |x − c|²)`, whose mean
    /// curvature is `n/R`.
    Cap { radius: f64, center: Vec<f64> },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationSettings {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub trust_radius: f64,
    pub divergence_factor: f64,
    pub divergence_window: usize,
    pub linear_tol: f64,
    pub solver: SolverChoice,
    pub upwind: bool,
}

impl Default for IterationSettings {
    fn default() -> Self {
        // Defaults mirror the library's.
        let c = IterationConfig::new(SobolevParams { n: 2, p: 2.0, q: 4.0, beta: 0.25 });
        IterationSettings {
            damping: c.damping,
            max_iters: c.max_iters,
            tol: c.tol,
            trust_radius: c.trust_radius,
            divergence_factor: c.divergence_factor,
            divergence_window: c.divergence_window,
            linear_tol: c.linear_tol,
            solver: c.solver,
            upwind: c.upwind,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub s_values: Vec<f64>,
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub base: BaseSpec,
    pub prescription: PrescriptionSpec,
    pub boundary: BoundarySpec,
    pub p: f64,
    pub iteration: IterationSettings,
    pub output_dir: PathBuf,
    pub dump_iterates: bool,
    pub seed: u64,
    pub sweep: Option<SweepSettings>,
}

const KNOWN_KEYS: &[&str] = &[
    "domain.shape",
    "domain.a",
    "domain.b",
    "domain.nodes",
    "domain.x",
    "domain.y",
    "domain.nx",
    "domain.ny",
    "domain.center",
    "domain.radius",
    "base.kind",
    "base.slope",
    "base.offset",
    "base.scale",
    "base.path",
    "prescription.kind",
    "prescription.c",
    "prescription.s",
    "prescription.gamma",
    "prescription.center",
    "boundary.kind",
    "boundary.slope",
    "boundary.offset",
    "boundary.radius",
    "boundary.center",
    "boundary.path",
    "sobolev.n",
    "sobolev.p",
    "iteration.damping",
    "iteration.max_iters",
    "iteration.tol",
    "iteration.trust_radius",
    "iteration.divergence_factor",
    "iteration.divergence_window",
    "iteration.linear_tol",
    "iteration.solver",
    "iteration.upwind",
    "output.dir",
    "output.dump_iterates",
    "run.seed",
    "sweep.s_values",
    "sweep.warm_start",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn req(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).map_or_else(|| err(key, "required key is missing"), Ok)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).or_else(|_| err(key, format!("`{v}` is not {what}"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.parse::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return err(key, "must be finite");
        }
        Ok(v)
    }

    fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.req(key)?;
        self.f64_or(key, 0.0)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse::<usize>(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parse::<bool>(key, "`true` or `false`")?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let mut out = Vec::new();
        for tok in v.split(',') {
            match tok.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => out.push(x),
                _ => return err(key, format!("`{}` is not a number", tok.trim())),
            }
        }
        Ok(Some(out))
    }

    fn list_len(&self, key: &str, len: usize) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.list(key)? {
            Some(v) if v.len() != len => err(key, format!("expected {len} comma-separated values, got {}", v.len())),
            other => Ok(other),
        }
    }

    fn pair(&self, key: &str) -> Result<[f64; 2], ConfigError> {
        self.req(key)?;
        let v = self.list_len(key, 2)?.unwrap();
        Ok([v[0], v[1]])
    }
}

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(line, format!("line {} is not `key = value`", lineno + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return err(k, "unknown key");
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return err(k, "given twice");
        }
    }
    Ok(Entries { map })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let e = parse_entries(text)?;

        let domain = match e.req("domain.shape")? {
            "interval" => DomainSpec::Interval {
                a: e.f64_or("domain.a", 0.0)?,
                b: e.f64_or("domain.b", 1.0)?,
                nodes: e.usize_or("domain.nodes", 33)?,
            },
            "rectangle" => DomainSpec::Rectangle {
                x: if e.raw("domain.x").is_some() { e.pair("domain.x")? } else { [0.0, 1.0] },
                y: if e.raw("domain.y").is_some() { e.pair("domain.y")? } else { [0.0, 1.0] },
                nx: e.usize_or("domain.nx", 33)?,
                ny: e.usize_or("domain.ny", e.usize_or("domain.nx", 33)?)?,
            },
            "disc" => DomainSpec::Disc {
                center: if e.raw("domain.center").is_some() { e.pair("domain.center")? } else { [0.0, 0.0] },
                radius: e.f64_or("domain.radius", 1.0)?,
                nodes: e.usize_or("domain.nodes", 33)?,
            },
            other => return err("domain.shape", format!("`{other}` is not one of interval, rectangle, disc")),
        };
        Domain::build(domain.clone()).or_else(|x| err("domain.shape", x.to_string()))?;
        let dim = domain.dim();

        if let Some(n) = e.parse::<usize>("sobolev.n", "an integer")? {
            if n != dim {
                return err("sobolev.n", format!("{n} does not match the {dim}-dimensional domain"));
            }
        }
        let p = e.f64_or("sobolev.p", 0.75 * (dim as f64 + 1.0))?;
        derive_q(dim, p).or_else(|x| err("sobolev.p", x.to_string()))?;

        let affine = |slope_key: &str, offset_key: &str| -> Result<(Vec<f64>, f64), ConfigError> {
            let slope = e.list_len(slope_key, dim)?.unwrap_or_else(|| vec![0.0; dim]);
            Ok((slope, e.f64_or(offset_key, 0.0)?))
        };

        let base = match e.raw("base.kind").unwrap_or("none") {
            "none" => BaseSpec::None,
            "affine" => {
                let (slope, offset) = affine("base.slope", "base.offset")?;
                BaseSpec::Affine { slope, offset }
            }
            "scherk" => {
                if dim != 2 {
                    return err("base.kind", "the Scherk base needs a 2-dimensional domain");
                }
                let scale = e.f64_or("base.scale", 1.0)?;
                if scale <= 0.0 {
                    return err("base.scale", "must be positive");
                }
                BaseSpec::Scherk { scale }
            }
            "file" => BaseSpec::File(PathBuf::from(e.req("base.path")?)),
            other => return err("base.kind", format!("`{other}` is not one of none, affine, scherk, file")),
        };

        let prescription = match e.req("prescription.kind")? {
            "zero" => PrescriptionSpec::Zero,
            "constant" => PrescriptionSpec::Constant { c: e.f64_req("prescription.c")? },
            "vertical_gaussian" => PrescriptionSpec::VerticalGaussian { s: e.f64_req("prescription.s")? },
            "singular" => PrescriptionSpec::Singular {
                s: e.f64_req("prescription.s")?,
                gamma: e.f64_req("prescription.gamma")?,
                center: e.list_len("prescription.center", dim + 1)?.unwrap_or_else(|| vec![0.0; dim + 1]),
            },
            "monotone_tanh" => PrescriptionSpec::MonotoneTanh { s: e.f64_req("prescription.s")? },
            other => {
                return err(
                    "prescription.kind",
                    format!("`{other}` is not one of zero, constant, vertical_gaussian, singular, monotone_tanh"),
                )
            }
        };
        prescription.build(dim).or_else(|x| err("prescription.kind", x.to_string()))?;

        let boundary = match e.raw("boundary.kind").unwrap_or("zero") {
            "zero" => BoundarySpec::Zero,
            "affine" => {
                let (slope, offset) = affine("boundary.slope", "boundary.offset")?;
                BoundarySpec::Affine { slope, offset }
            }
            "cap" => {
                let radius = e.f64_or("boundary.radius", 2.0)?;
                if radius <= 0.0 {
                    return err("boundary.radius", "must be positive");
                }
                BoundarySpec::Cap {
                    radius,
                    center: e.list_len("boundary.center", dim)?.unwrap_or_else(|| vec![0.0; dim]),
                }
            }
            "file" => BoundarySpec::File(PathBuf::from(e.req("boundary.path")?)),
            other => return err("boundary.kind", format!("`{other}` is not one of zero, affine, cap, file")),
        };

        let d = IterationSettings::default();
        let iteration = IterationSettings {
            damping: e.f64_or("iteration.damping", d.damping)?,
            max_iters: e.usize_or("iteration.max_iters", d.max_iters)?,
            tol: e.f64_or("iteration.tol", d.tol)?,
            trust_radius: e.f64_or("iteration.trust_radius", d.trust_radius)?,
            divergence_factor: e.f64_or("iteration.divergence_factor", d.divergence_factor)?,
            divergence_window: e.usize_or("iteration.divergence_window", d.divergence_window)?,
            linear_tol: e.f64_or("iteration.linear_tol", d.linear_tol)?,
            solver: match e.raw("iteration.solver").unwrap_or("auto") {
                "auto" => SolverChoice::Auto,
                "direct" => SolverChoice::Direct,
                "iterative" => SolverChoice::Iterative,
                other => return err("iteration.solver", format!("`{other}` is not one of auto, direct, iterative")),
            },
            upwind: e.bool_or("iteration.upwind", d.upwind)?,
        };

        let sweep = match e.list("sweep.s_values")? {
            Some(s_values) => {
                if s_values.windows(2).any(|w| !(w[0] < w[1])) {
                    return err("sweep.s_values", "must be strictly increasing");
                }
                Some(SweepSettings { s_values, warm_start: e.bool_or("sweep.warm_start", true)? })
            }
            None if e.raw("sweep.warm_start").is_some() => return err("sweep.warm_start", "given without sweep.s_values"),
            None => None,
        };

        let cfg = RunConfig {
            domain,
            base,
            prescription,
            boundary,
            p,
            iteration,
            output_dir: PathBuf::from(e.raw("output.dir").unwrap_or("out")),
            dump_iterates: e.bool_or("output.dump_iterates", false)?,
            seed: e.parse::<u64>("run.seed", "a non-negative integer")?.unwrap_or(0),
            sweep,
        };
        cfg.iteration_config()?.validate().or_else(|x| match x {
            pmc_core::PmcError::InvalidArgument { name, reason } => err(&format!("iteration.{name}"), reason),
            other => err("iteration", other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn params(&self) -> Result<SobolevParams, ConfigError> {
        derive_q(self.domain.dim(), self.p).or_else(|x| err("sobolev.p", x.to_string()))
    }

    pub fn iteration_config(&self) -> Result<IterationConfig, ConfigError> {
        let s = &self.iteration;
        let mut c = IterationConfig::new(self.params()?);
        c.damping = s.damping;
        c.max_iters = s.max_iters;
        c.tol = s.tol;
        c.trust_radius = s.trust_radius;
        c.divergence_factor = s.divergence_factor;
        c.divergence_window = s.divergence_window;
        c.linear_tol = s.linear_tol;
        c.solver = s.solver;
        c.upwind = s.upwind;
        c.seed = self.seed;
        Ok(c)
    }

    /// Canonical text form; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");

        match &self.domain {
            DomainSpec::Interval { a, b, nodes } => {
                put("domain.shape", "interval".into());
                put("domain.a", format!("{a:?}"));
                put("domain.b", format!("{b:?}"));
                put("domain.nodes", nodes.to_string());
            }
            DomainSpec::Rectangle { x, y, nx, ny } => {
                put("domain.shape", "rectangle".into());
                put("domain.x", list(x));
                put("domain.y", list(y));
                put("domain.nx", nx.to_string());
                put("domain.ny", ny.to_string());
            }
            DomainSpec::Disc { center, radius, nodes } => {
                put("domain.shape", "disc".into());
                put("domain.center", list(center));
                put("domain.radius", format!("{radius:?}"));
                put("domain.nodes", nodes.to_string());
            }
        }

        match &self.base {
            BaseSpec::None => put("base.kind", "none".into()),
            BaseSpec::Affine { slope, offset } => {
                put("base.kind", "affine".into());
                put("base.slope", list(slope));
                put("base.offset", format!("{offset:?}"));
            }
            BaseSpec::Scherk { scale } => {
                put("base.kind", "scherk".into());
                put("base.scale", format!("{scale:?}"));
            }
            BaseSpec::File(p) => {
                put("base.kind", "file".into());
                put("base.path", p.display().to_string());
            }
        }

        put("prescription.kind", self.prescription.name().into());
        match &self.prescription {
            PrescriptionSpec::Zero => {}
            PrescriptionSpec::Constant { c } => put("prescription.c", format!("{c:?}")),
            PrescriptionSpec::VerticalGaussian { s } | PrescriptionSpec::MonotoneTanh { s } => {
                put("prescription.s", format!("{s:?}"))
            }
            PrescriptionSpec::Singular { s, gamma, center } => {
                put("prescription.s", format!("{s:?}"));
                put("prescription.gamma", format!("{gamma:?}"));
                put("prescription.center", list(center));
            }
        }

        match &self.boundary {
            BoundarySpec::Zero => put("boundary.kind", "zero".into()),
            BoundarySpec::Affine { slope, offset } => {
                put("boundary.kind", "affine".into());
                put("boundary.slope", list(slope));
                put("boundary.offset", format!("{offset:?}"));
            }
            BoundarySpec::Cap { radius, center } => {
                put("boundary.kind", "cap".into());
                put("boundary.radius", format!("{radius:?}"));
                put("boundary.center", list(center));
            }
            BoundarySpec::File(p) => {
                put("boundary.kind", "file".into());
                put("boundary.path", p.display().to_string());
            }
        }

        put("sobolev.n", self.domain.dim().to_string());
        put("sobolev.p", format!("{:?}", self.p));

        let it = &self.iteration;
        put("iteration.damping", format!("{:?}", it.damping));
        put("iteration.max_iters", it.max_iters.to_string());
        put("iteration.tol", format!("{:?}", it.tol));
        put("iteration.trust_radius", format!("{:?}", it.trust_radius));
        put("iteration.divergence_factor", format!("{:?}", it.divergence_factor));
        put("iteration.divergence_window", it.divergence_window.to_string());
        put("iteration.linear_tol", format!("{:?}", it.linear_tol));
        let solver = match it.solver {
            SolverChoice::Auto => "auto",
            SolverChoice::Direct => "direct",
            SolverChoice::Iterative => "iterative",
        };
        put("iteration.solver", solver.into());
        put("iteration.upwind", it.upwind.to_string());

        put("output.dir", self.output_dir.display().to_string());
        put("output.dump_iterates", self.dump_iterates.to_string());
        put("run.seed", self.seed.to_string());

        if let Some(sw) = &self.sweep {
            put("sweep.s_values", list(&sw.s_values));
            put("sweep.warm_start", sw.warm_start.to_string());
        }
        out
    }
}
