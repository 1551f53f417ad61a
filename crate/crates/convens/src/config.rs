//! Experiment configuration: per-experiment defaults, flat key=value
//! config files, and the reproducibility manifest.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::mesh::Rect;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Benchmark,
    ConvergenceSpace,
    ConvergenceTime,
    Predictability,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Benchmark => "benchmark",
            Experiment::ConvergenceSpace => "convergence-space",
            Experiment::ConvergenceTime => "convergence-time",
            Experiment::Predictability => "predictability",
        }
    }
}

/// Full run configuration. Fields unused by a given experiment keep their
/// defaults and are still recorded in the manifest.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub m: usize,
    pub m_list: Vec<usize>,
    pub dt0: f64,
    pub dt_list: Vec<f64>,
    pub t_star: f64,
    pub steady_tol: f64,
    pub max_steps: usize,
    pub pr: f64,
    pub ra_list: Vec<f64>,
    pub kappa_f: f64,
    pub kappa_s: f64,
    pub thick_wall: bool,
    pub include_u1_source: bool,
    pub solid_strips: Vec<Rect>,
    /// ε draw is deterministic from `seed` when not given explicitly.
    pub bv_eps: Option<[f64; 3]>,
    pub bv_delta_t: f64,
    pub bv_k_star: u32,
    pub seed: u64,
    pub outdir: PathBuf,
    pub energy_symmetric: bool,
    pub c_dagger: f64,
    pub mms_eps: f64,
    pub gamma: [f64; 2],
}

impl RunConfig {
    /// Defaults for each experiment.
    pub fn defaults(experiment: Experiment) -> RunConfig {
        let mut cfg = RunConfig {
            experiment,
            m: 64,
            m_list: vec![4, 8, 16, 32],
            dt0: 1e-3,
            dt_list: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            t_star: 0.5,
            steady_tol: 1e-5,
            max_steps: 200_000,
            pr: 0.71,
            ra_list: vec![1e3, 1e4, 1e5, 1e6],
            kappa_f: 1.0,
            kappa_s: 1.0,
            thick_wall: false,
            include_u1_source: false,
            solid_strips: Vec::new(),
            bv_eps: None,
            bv_delta_t: 1e-3,
            bv_k_star: 5,
            seed: 42,
            outdir: PathBuf::from("out"),
            energy_symmetric: false,
            c_dagger: 1.0,
            mms_eps: 1e-2,
            gamma: [0.0, 1.0],
        };
        match experiment {
            Experiment::Benchmark => {}
            Experiment::ConvergenceSpace => {
                cfg.pr = 1.0;
                cfg.ra_list = vec![100.0];
                cfg.dt0 = 1e-4;
                cfg.t_star = 1e-3;
                cfg.include_u1_source = true;
                cfg.m = 32;
            }
            Experiment::ConvergenceTime => {
                cfg.pr = 1.0;
                cfg.ra_list = vec![100.0];
                cfg.t_star = 1.0;
                cfg.include_u1_source = true;
                cfg.m = 32;
            }
            Experiment::Predictability => {
                cfg.pr = 1.0;
                cfg.ra_list = vec![1e2, 1e3, 1e4];
                cfg.dt0 = 1e-3;
                cfg.t_star = 0.5;
                cfg.include_u1_source = true;
                cfg.m = 32;
            }
        }
        cfg
    }

    /// Apply one key=value assignment (config file line or CLI override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidConfig(format!("bad value {value:?} for {what}"));
        match key {
            "m" => self.m = value.parse().map_err(|_| bad("m"))?,
            "m_list" => self.m_list = parse_list(value).map_err(|_| bad("m_list"))?,
            "dt0" => self.dt0 = parse_f64(value).map_err(|_| bad("dt0"))?,
            "dt_list" => self.dt_list = parse_list(value).map_err(|_| bad("dt_list"))?,
            "t_star" => self.t_star = parse_f64(value).map_err(|_| bad("t_star"))?,
            "steady_tol" => self.steady_tol = parse_f64(value).map_err(|_| bad("steady_tol"))?,
            "max_steps" => self.max_steps = value.parse().map_err(|_| bad("max_steps"))?,
            "pr" => self.pr = parse_f64(value).map_err(|_| bad("pr"))?,
            "ra" | "ra_list" => self.ra_list = parse_list(value).map_err(|_| bad("ra"))?,
            "kappa_f" => self.kappa_f = parse_f64(value).map_err(|_| bad("kappa_f"))?,
            "kappa_s" => self.kappa_s = parse_f64(value).map_err(|_| bad("kappa_s"))?,
            "thick_wall" => self.thick_wall = parse_bool(value).map_err(|_| bad("thick_wall"))?,
            "include_u1_source" => {
                self.include_u1_source = parse_bool(value).map_err(|_| bad("include_u1_source"))?
            }
            "solid_strips" => self.solid_strips = parse_strips(value)?,
            "bv_eps" => {
                let v: Vec<f64> = parse_list(value).map_err(|_| bad("bv_eps"))?;
                if v.len() != 3 {
                    return Err(bad("bv_eps (need three values)"));
                }
                self.bv_eps = Some([v[0], v[1], v[2]]);
            }
            "bv_delta_t" => self.bv_delta_t = parse_f64(value).map_err(|_| bad("bv_delta_t"))?,
            "bv_k_star" => self.bv_k_star = value.parse().map_err(|_| bad("bv_k_star"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "outdir" => self.outdir = PathBuf::from(value),
            "energy_symmetric" => {
                self.energy_symmetric = parse_bool(value).map_err(|_| bad("energy_symmetric"))?
            }
            "c_dagger" => self.c_dagger = parse_f64(value).map_err(|_| bad("c_dagger"))?,
            "mms_eps" => self.mms_eps = parse_f64(value).map_err(|_| bad("mms_eps"))?,
            "gamma" => {
                let v: Vec<f64> = parse_list(value).map_err(|_| bad("gamma"))?;
                if v.len() != 2 {
                    return Err(bad("gamma (need two components)"));
                }
                self.gamma = [v[0], v[1]];
            }
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Load key=value lines; '#' starts a comment.
    pub fn load_file(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("{}:{}: expected key=value", path.display(), ln + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt0 <= 0.0 || self.t_star <= 0.0 || self.steady_tol < 0.0 {
            return Err(Error::InvalidConfig("time parameters must be positive".into()));
        }
        if self.pr <= 0.0 || self.kappa_f <= 0.0 || self.kappa_s <= 0.0 {
            return Err(Error::InvalidConfig("physical parameters must be positive".into()));
        }
        if self.ra_list.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidConfig("Rayleigh numbers must be nonnegative".into()));
        }
        if self.m == 0 || self.m_list.iter().any(|&m| m == 0) {
            return Err(Error::InvalidConfig("mesh resolutions must be positive".into()));
        }
        if self.dt_list.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidConfig("timesteps must be positive".into()));
        }
        Ok(())
    }

    /// Flat key=value manifest; together with the code version this is
    /// sufficient to reproduce the run bitwise.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "code_version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "experiment={}", self.experiment.name());
        let _ = writeln!(s, "m={}", self.m);
        let _ = writeln!(s, "m_list={}", join(&self.m_list));
        let _ = writeln!(s, "dt0={}", self.dt0);
        let _ = writeln!(s, "dt_list={}", join(&self.dt_list));
        let _ = writeln!(s, "t_star={}", self.t_star);
        let _ = writeln!(s, "steady_tol={}", self.steady_tol);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "pr={}", self.pr);
        let _ = writeln!(s, "ra_list={}", join(&self.ra_list));
        let _ = writeln!(s, "kappa_f={}", self.kappa_f);
        let _ = writeln!(s, "kappa_s={}", self.kappa_s);
        let _ = writeln!(s, "thick_wall={}", self.thick_wall);
        let _ = writeln!(s, "include_u1_source={}", self.include_u1_source);
        let _ = writeln!(
            s,
            "solid_strips={}",
            self.solid_strips
                .iter()
                .map(|r| format!("{},{},{},{}", r.x0, r.x1, r.y0, r.y1))
                .collect::<Vec<_>>()
                .join(";")
        );
        match self.bv_eps {
            Some(e) => {
                let _ = writeln!(s, "bv_eps={},{},{}", e[0], e[1], e[2]);
            }
            None => {
                let _ = writeln!(s, "bv_eps=");
            }
        }
        let _ = writeln!(s, "bv_delta_t={}", self.bv_delta_t);
        let _ = writeln!(s, "bv_k_star={}", self.bv_k_star);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "outdir={}", self.outdir.display());
        let _ = writeln!(s, "energy_symmetric={}", self.energy_symmetric);
        let _ = writeln!(s, "c_dagger={}", self.c_dagger);
        let _ = writeln!(s, "mms_eps={}", self.mms_eps);
        let _ = writeln!(s, "gamma={},{}", self.gamma[0], self.gamma[1]);
        s
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    v.trim().parse::<f64>()
}

fn parse_bool(v: &str) -> std::result::Result<bool, ()> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(()),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, ()> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| ()))
        .collect()
}

fn parse_strips(v: &str) -> Result<Vec<Rect>> {
    let mut out = Vec::new();
    for part in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let nums: Vec<f64> =
            parse_list(part).map_err(|_| Error::InvalidConfig(format!("bad strip spec {part:?}")))?;
        if nums.len() != 4 {
            return Err(Error::InvalidConfig(format!(
                "strip spec {part:?} must be x0,x1,y0,y1"
            )));
        }
        out.push(Rect { x0: nums[0], x1: nums[1], y0: nums[2], y1: nums[3] });
    }
    Ok(out)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_defaults() {
        let b = RunConfig::defaults(Experiment::Benchmark);
        assert_eq!(b.pr, 0.71);
        assert_eq!(b.kappa_f, 1.0);
        assert_eq!(b.m, 64);
        assert_eq!(b.dt0, 1e-3);
        assert_eq!(b.steady_tol, 1e-5);

        let cs = RunConfig::defaults(Experiment::ConvergenceSpace);
        assert_eq!(cs.pr, 1.0);
        assert_eq!(cs.ra_list, vec![100.0]);
        assert_eq!(cs.dt0, 1e-4);
        assert_eq!(cs.t_star, 1e-3);

        let p = RunConfig::defaults(Experiment::Predictability);
        assert_eq!(p.t_star, 0.5);
        assert_eq!(p.dt0, 1e-3);
        assert_eq!(p.ra_list, vec![1e2, 1e3, 1e4]);
        assert_eq!(p.bv_k_star, 5);
        assert_eq!(p.bv_delta_t, 1e-3);
    }

    #[test]
    fn set_and_manifest_roundtrip() {
        let mut cfg = RunConfig::defaults(Experiment::Benchmark);
        cfg.set("m", "32").unwrap();
        cfg.set("ra", "1e4").unwrap();
        cfg.set("bv_eps", "0.005,0.004,0.003").unwrap();
        cfg.set("include_u1_source", "true").unwrap();
        assert_eq!(cfg.m, 32);
        assert_eq!(cfg.ra_list, vec![1e4]);
        assert!(cfg.include_u1_source);
        let manifest = cfg.manifest();
        assert!(manifest.contains("m=32"));
        assert!(manifest.contains("ra_list=10000"));
        assert!(manifest.contains("bv_eps=0.005,0.004,0.003"));
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("dt0", "abc").is_err());
    }

    #[test]
    fn config_file_parsing() {
        let dir = std::env::temp_dir().join("convens_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(&path, "# comment\nm = 16\nra = 1e3,1e4 # inline\n\nseed=7\n").unwrap();
        let mut cfg = RunConfig::defaults(Experiment::Benchmark);
        cfg.load_file(&path).unwrap();
        assert_eq!(cfg.m, 16);
        assert_eq!(cfg.ra_list, vec![1e3, 1e4]);
        assert_eq!(cfg.seed, 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::defaults(Experiment::Benchmark);
        cfg.dt0 = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults(Experiment::Benchmark);
        cfg.pr = 0.0;
        assert!(cfg.validate().is_err());
    }
}
