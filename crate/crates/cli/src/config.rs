//! Run configuration: a flat TOML file merged with `--key=value` flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use plateau_core::{parse_spec, CurvatureSpec, Domain, RadialProfile, Schedule, Shape};
use serde::Deserialize;

/// Usage or configuration error; maps to exit code 64.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Keys accepted in the config file; every one can be overridden by the flag
/// of the same name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub domain: Option<String>,
    pub f: Option<String>,
    pub sigma: Option<f64>,
    pub grid: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub schedule: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Config file (flat TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `disk R`, `ellipse A,B`, `star BASE,AMP,MODE`, `interval D` or
    /// `fourier A0;C1,C2,..;S1,S2,..`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Curvature function, e.g. `mean`, `gauss`, `quotient:2,1`.
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// `NR,NPHI` (intervals: `N`).
    #[arg(long)]
    pub grid: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the randomized curvature-function checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ladder overrides: `t=0,0.5,1;theta=0.5,0;eps=0.05,0.025`.
    #[arg(long)]
    pub schedule: Option<String>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub spec: CurvatureSpec,
    pub sigma: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub schedule: Schedule,
}

pub const DEFAULT_DOMAIN: &str = "disk 1";
pub const DEFAULT_GRID: &str = "32,64";
pub const DEFAULT_OUT: &str = "plateau-out";

/// Reads a config file; parse errors carry the file name and the line and
/// column reported by the TOML parser.
pub fn read_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

impl RunArgs {
    /// The output directory alone.
    pub fn resolve_out(&self) -> Result<PathBuf, ConfigError> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        Ok(self.out.clone().or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()))
    }

    /// Merges flags over the config file and validates the result.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let domain_text = self.domain.clone().or(file.domain).unwrap_or_else(|| DEFAULT_DOMAIN.into());
        let grid_text = self.grid.clone().or(file.grid).unwrap_or_else(|| DEFAULT_GRID.into());
        let shape = parse_domain(&domain_text)?;
        let (n_r, n_phi) = parse_grid(&grid_text, &shape)?;
        let domain = Domain::new(shape, n_r, n_phi).map_err(|e| ConfigError(format!("domain: {e}")))?;
        let f = self.f.clone().or(file.f).unwrap_or_else(|| "mean".into());
        let spec = parse_spec(&f, domain.dim()).map_err(|e| ConfigError(format!("f: {e}")))?;
        let sigma = match self.sigma.or(file.sigma) {
            Some(s) => s,
            None => return bad("sigma is required"),
        };
        check_sigma(sigma)?;
        let mut schedule = Schedule::default_for(&domain);
        if let Some(text) = self.schedule.as_ref().or(file.schedule.as_ref()) {
            apply_schedule(&mut schedule, text)?;
        }
        schedule.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(RunConfig {
            domain,
            spec,
            sigma,
            out: self.out.clone().or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            seed: self.seed.or(file.seed).unwrap_or(0),
            schedule,
        })
    }
}

pub fn check_sigma(sigma: f64) -> Result<(), ConfigError> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        bad(format!("sigma must lie in (0,1), got {sigma}"))
    }
}

fn numbers(text: &str, what: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| ConfigError(format!("{what}: `{s}` is not a number"))))
        .collect()
}

pub fn parse_domain(text: &str) -> Result<Shape, ConfigError> {
    let text = text.trim();
    let (kind, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let args = |n: usize| -> Result<Vec<f64>, ConfigError> {
        let v = numbers(rest, kind)?;
        if v.len() == n {
            Ok(v)
        } else {
            bad(format!("domain `{kind}` takes {n} value(s), got {}", v.len()))
        }
    };
    Ok(match kind {
        "disk" => Shape::StarShaped(RadialProfile::disk(args(1)?[0])),
        "ellipse" => {
            let v = args(2)?;
            Shape::StarShaped(RadialProfile::Ellipse { a: v[0], b: v[1] })
        }
        "star" => {
            let v = args(3)?;
            if v[2] < 0.0 || v[2].fract() != 0.0 {
                return bad("star mode must be a nonnegative integer");
            }
            Shape::StarShaped(RadialProfile::star(v[0], v[1], v[2] as usize))
        }
        "interval" => Shape::Interval { half_width: args(1)?[0] },
        "fourier" => {
            let mut parts = rest.split(';');
            let a0 = numbers(parts.next().unwrap_or(""), "fourier")?;
            if a0.len() != 1 {
                return bad("fourier needs `A0;C1,C2,..;S1,S2,..`");
            }
            let cos = numbers(parts.next().unwrap_or(""), "fourier")?;
            let sin = numbers(parts.next().unwrap_or(""), "fourier")?;
            Shape::StarShaped(RadialProfile::Fourier { a0: a0[0], cos, sin })
        }
        _ => return bad(format!("unknown domain `{kind}`")),
    })
}

pub fn parse_grid(text: &str, shape: &Shape) -> Result<(usize, usize), ConfigError> {
    let v: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| ConfigError(format!("grid: `{text}` is not NR,NPHI"))))
        .collect::<Result<_, _>>()?;
    match (shape, v.as_slice()) {
        (Shape::Interval { .. }, [n]) | (Shape::Interval { .. }, [n, _]) => Ok((*n, 0)),
        (Shape::StarShaped(_), [nr, np]) => Ok((*nr, *np)),
        (Shape::StarShaped(_), [nr]) => Ok((*nr, 2 * nr)),
        _ => bad(format!("grid: `{text}` is not NR,NPHI")),
    }
}

pub fn apply_schedule(schedule: &mut Schedule, text: &str) -> Result<(), ConfigError> {
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((key, values)) = part.split_once('=') else {
            return bad(format!("schedule: `{part}` is not key=values"));
        };
        let v = numbers(values, key.trim())?;
        match key.trim() {
            "t" => schedule.t = v,
            "theta" => schedule.theta = v,
            "eps" => schedule.eps = v,
            other => return bad(format!("schedule: unknown ladder `{other}`")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_presets() {
        assert_eq!(parse_domain("disk 0.5").unwrap(), Shape::StarShaped(RadialProfile::disk(0.5)));
        assert_eq!(
            parse_domain("star 1, 0.3, 5").unwrap(),
            Shape::StarShaped(RadialProfile::star(1.0, 0.3, 5))
        );
        assert_eq!(parse_domain("interval 2").unwrap(), Shape::Interval { half_width: 2.0 });
        assert_eq!(
            parse_domain("fourier 1;0,0.1;0.05").unwrap(),
            Shape::StarShaped(RadialProfile::Fourier {
                a0: 1.0,
                cos: vec![0.0, 0.1],
                sin: vec![0.05]
            })
        );
        assert!(parse_domain("disk").is_err());
        assert!(parse_domain("square 1").is_err());
        assert!(parse_domain("star 1,0.3,2.5").is_err());
    }

    #[test]
    fn grid_forms() {
        let disk = Shape::StarShaped(RadialProfile::disk(1.0));
        assert_eq!(parse_grid("16,48", &disk).unwrap(), (16, 48));
        assert_eq!(parse_grid("16", &disk).unwrap(), (16, 32));
        assert_eq!(parse_grid("40", &Shape::Interval { half_width: 1.0 }).unwrap(), (40, 0));
        assert!(parse_grid("a,b", &disk).is_err());
    }

    #[test]
    fn schedule_overrides() {
        let d = Domain::disk(1.0, 8, 16).unwrap();
        let mut s = Schedule::default_for(&d);
        apply_schedule(&mut s, "eps=0.04,0.02; t=0,1").unwrap();
        assert_eq!(s.eps, vec![0.04, 0.02]);
        assert_eq!(s.t, vec![0.0, 1.0]);
        assert_eq!(s.theta.len(), 5);
        assert!(apply_schedule(&mut s, "rho=1").is_err());
    }

    #[test]
    fn sigma_range() {
        assert!(check_sigma(0.5).is_ok());
        for s in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
            assert!(check_sigma(s).unwrap_err().0.starts_with("sigma must lie in (0,1)"));
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("plateau-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "domain = \"disk 0.5\"\nsigma = 0.4\ngrid = \"8,16\"\nf = \"gauss\"\n").unwrap();
        let args = RunArgs {
            config: Some(path.clone()),
            sigma: Some(0.6),
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.sigma, 0.6);
        assert_eq!(c.spec, CurvatureSpec::gauss(2));
        assert_eq!((c.domain.n_r, c.domain.n_phi), (8, 16));
        std::fs::write(&path, "sigma = 0.4\nbogus = 1\n").unwrap();
        let err = args.resolve().unwrap_err().0;
        assert!(err.contains("line 2"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
