//! Resolution of scenario parameters: flags, then config file, then defaults.

use std::collections::BTreeMap;
use std::path::Path;

use pretest_coverage::{Config, CorrStructure, EstimatorKind, Method};

use crate::CliError;

/// Key/value pairs read from a config file or an emitted manifest.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Plain `key = value` lines; `#` starts a comment. A file containing
    /// `#!` manifest lines (such as a CSV written by this tool) is read from
    /// those lines only.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let manifest = text.lines().any(|l| l.trim_start().starts_with("#!"));
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let body = if manifest {
                match line.strip_prefix("#!") {
                    Some(b) => b.trim(),
                    None => continue,
                }
            } else {
                let b = line.split('#').next().unwrap_or("").trim();
                if b.is_empty() {
                    continue;
                }
                b
            };
            let Some((k, v)) = body.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", lineno + 1)));
            };
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

pub fn parse_real(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || CliError::Config(format!("not a number: {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        return Ok(a / b);
    }
    s.parse().map_err(|_| bad())
}

pub fn parse_structure(s: &str) -> Result<CorrStructure, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "cs" => Ok(CorrStructure::CompoundSymmetry),
        "ar1" => Ok(CorrStructure::Ar1),
        other => Err(CliError::Config(format!("unknown structure {other:?} (cs|ar1)"))),
    }
}

pub fn parse_estimator(s: &str) -> Result<EstimatorKind, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "known" => Ok(EstimatorKind::KnownVariances),
        "unbiased" => Ok(EstimatorKind::Unbiased),
        "mle" => Ok(EstimatorKind::Mle),
        "wooldridge0" => Ok(EstimatorKind::Wooldridge { dof_correction: 0 }),
        "wooldridge2" => Ok(EstimatorKind::Wooldridge { dof_correction: 2 }),
        other => {
            Err(CliError::Config(format!("unknown estimator {other:?} (known|unbiased|mle|wooldridge0|wooldridge2)")))
        }
    }
}

/// `None` means "pick per structure".
pub fn parse_method(s: &str) -> Result<Option<Method>, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "auto" => Ok(None),
        "brute" => Ok(Some(Method::BruteForce)),
        "cv" => Ok(Some(Method::ControlVariate)),
        other => Err(CliError::Config(format!("unknown method {other:?} (auto|brute|cv)"))),
    }
}

/// `start:stop:count`, or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, b) = (parse_real(parts[0])?, parse_real(parts[1])?);
        let count: usize = parts[2].trim().parse().map_err(|_| CliError::Config(format!("bad grid count in {s:?}")))?;
        return match count {
            0 => Err(CliError::Config("grid count must be positive".into())),
            1 => Ok(vec![a]),
            _ => Ok((0..count).map(|j| a + (b - a) * j as f64 / (count - 1) as f64).collect()),
        };
    }
    let v = s.split(',').map(parse_real).collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(CliError::Config("empty grid".into()));
    }
    Ok(v)
}

pub fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    s.split(',').map(|p| f(p.trim())).collect()
}

/// Scenario flags shared by every command, before resolution.
#[derive(Debug, Default, Clone)]
pub struct RawScenario {
    pub structure: Option<String>,
    pub rho: Option<String>,
    pub psi: Option<String>,
    pub tau: Option<String>,
    pub lambda: Option<String>,
    pub n: Option<String>,
    pub t: Option<String>,
    pub alpha: Option<String>,
    pub alpha_tilde: Option<String>,
    pub estimator: Option<String>,
    pub m: Option<String>,
    pub seed: Option<String>,
    pub grid: Option<String>,
    pub method: Option<String>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub nonexog_key: &'static str,
    pub nonexog_value: f64,
    pub runs: usize,
    pub seed: u64,
    pub grid: Option<Vec<f64>>,
    pub grid_text: Option<String>,
    pub method: Option<Method>,
}

pub struct Defaults {
    pub runs: usize,
}

fn pick<'a>(flag: &'a Option<String>, file: &'a FileConfig, key: &str) -> Option<&'a str> {
    flag.as_deref().or_else(|| file.get(key))
}

pub fn resolve(raw: &RawScenario, file: &FileConfig, defaults: &Defaults) -> Result<Resolved, CliError> {
    let structure = pick(&raw.structure, file, "structure").map(parse_structure).transpose()?;
    let real = |flag: &Option<String>, key: &str| pick(flag, file, key).map(parse_real).transpose();
    let count = |flag: &Option<String>, key: &str| -> Result<Option<u64>, CliError> {
        pick(flag, file, key)
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Config(format!("{key}: not a non-negative integer: {s:?}")))
            })
            .transpose()
    };

    let mut b = Config::builder();
    if let Some(s) = structure {
        b.structure = s;
    }
    if let Some(v) = real(&raw.rho, "rho")? {
        b.rho = v;
    }
    if let Some(v) = real(&raw.psi, "psi")? {
        b = b.psi(v);
    }
    if let Some(v) = count(&raw.n, "n")? {
        b.n = v as usize;
    }
    if let Some(v) = count(&raw.t, "t")? {
        b.t = v as usize;
    }
    if let Some(v) = real(&raw.alpha, "alpha")? {
        b.alpha = v;
    }
    if let Some(v) = real(&raw.alpha_tilde, "alpha_tilde")? {
        b.alpha_tilde = v;
    }
    if let Some(s) = pick(&raw.estimator, file, "estimator") {
        b.estimator = parse_estimator(s)?;
    }

    // A flag beats the file even when the file uses the other parameterisation.
    let (nonexog_key, nonexog_value) = match (&raw.tau, &raw.lambda) {
        (Some(_), Some(_)) => return Err(CliError::Config("give at most one of --tau and --lambda".into())),
        (Some(t), None) => ("tau", parse_real(t)?),
        (None, Some(l)) => ("lambda", parse_real(l)?),
        (None, None) => match (file.get("tau"), file.get("lambda")) {
            (Some(_), Some(_)) => return Err(CliError::Config("config gives both tau and lambda".into())),
            (Some(t), None) => ("tau", parse_real(t)?),
            (None, Some(l)) => ("lambda", parse_real(l)?),
            (None, None) => ("tau", 0.0),
        },
    };
    b = if nonexog_key == "tau" { b.tau(nonexog_value) } else { b.lambda(nonexog_value) };
    let config = b.build()?;

    let runs = count(&raw.m, "m")?.map_or(defaults.runs, |v| v as usize);
    let seed = count(&raw.seed, "seed")?.unwrap_or(1);
    let grid_text = pick(&raw.grid, file, "grid").map(str::to_string);
    let grid = grid_text.as_deref().map(parse_grid).transpose()?;
    let method = pick(&raw.method, file, "method").map(parse_method).transpose()?.flatten();
    Ok(Resolved { config, nonexog_key, nonexog_value, runs, seed, grid, grid_text, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0:8:5").unwrap(), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(parse_grid("0").unwrap(), vec![0.0]);
        assert_eq!(parse_grid("1, 2.5").unwrap(), vec![1.0, 2.5]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_real("1/3").unwrap(), 1.0 / 3.0);
        assert_eq!(parse_real(" 0.25 ").unwrap(), 0.25);
    }

    #[test]
    fn file_precedence() {
        let file = FileConfig::parse("rho = 0.5\n# comment\nn = 50\nlambda = 2 # trailing\n").unwrap();
        let raw = RawScenario { rho: Some("0.1".into()), ..Default::default() };
        let r = resolve(&raw, &file, &Defaults { runs: 7 }).unwrap();
        assert_eq!(r.config.rho(), 0.1);
        assert_eq!(r.config.n(), 50);
        assert_eq!(r.nonexog_key, "lambda");
        assert_eq!(r.runs, 7);
        let raw = RawScenario { tau: Some("0.05".into()), ..Default::default() };
        let r = resolve(&raw, &file, &Defaults { runs: 7 }).unwrap();
        assert_eq!(r.config.tau(), 0.05);
    }

    #[test]
    fn manifest_lines_only() {
        let text = "#! rho = 0.2\n# not a key\nlambda,cp\n0,0.9\n";
        let f = FileConfig::parse(text).unwrap();
        assert_eq!(f.get("rho"), Some("0.2"));
        assert!(FileConfig::parse("rho 0.2\n").is_err());
    }
}
