use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "clockopt", version, about = "Optimal consumption under a stochastic clock")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// RNG seed; recorded in every artifact.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for artifacts.
    #[arg(long, global = true, env = "CLOCKOPT_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,
    /// Format of the tabular artifact; a JSON summary is always written.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// JSON file with parameters; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Special functions of the OU clock.
    #[command(subcommand)]
    Specfun(SpecfunCmd),
    /// OU index, clock calibration and transform checks.
    #[command(subcommand)]
    Ou(OuCmd),
    /// Finite event-tree markets.
    #[command(subcommand)]
    Tree(TreeCmd),
    /// Explicit log-utility strategy.
    #[command(subcommand)]
    Logou(LogouCmd),
}

#[derive(Debug, Subcommand)]
pub enum SpecfunCmd {
    /// Evaluates a function at a list of points.
    Eval(SpecfunEval),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Function {
    /// H_xi(x); points are x.
    Hermite,
    /// d/dx H_xi(x); points are x.
    HermiteDx,
    /// Laplace exponent psi(lambda); points are lambda.
    Psi,
    /// j(lambda, r); points are r.
    Hitting,
    /// d/dr j(lambda, r); points are r.
    HittingDr,
    /// nu(r); points are r.
    Nu,
    /// Conditional beta-potential at (t, r, k); points are r.
    BetaPotential,
}

#[derive(Debug, Args)]
pub struct SpecfunEval {
    /// Function to evaluate.
    #[arg(long, value_enum)]
    pub function: Function,
    /// Evaluation points, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub at: Vec<f64>,
    /// Hermite order (negative).
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    /// Transform argument for hitting and hitting-dr (default 1).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// OU mean-reversion speed (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Discount rate for nu and beta-potential.
    #[arg(long)]
    pub beta: Option<f64>,
    /// nu variant: derived or alternate.
    #[arg(long, default_value = "derived")]
    pub variant: String,
    /// Time for beta-potential.
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// Clock level for beta-potential.
    #[arg(long, default_value_t = 0.0)]
    pub k: f64,
}

#[derive(Debug, Args, Default)]
pub struct OuCommon {
    /// OU mean-reversion speed (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Time step (default 1e-3).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// tanaka or occupation.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Occupation band half-width (default sqrt(dt)).
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum OuCmd {
    /// One OU path and its clock.
    Simulate {
        #[command(flatten)]
        ou: OuCommon,
        /// Starting level (default 0).
        #[arg(long, allow_hyphen_values = true)]
        r0: Option<f64>,
        /// Simulated time (default 10).
        #[arg(long)]
        horizon: Option<f64>,
        /// Clock normalisation (default 1/sqrt(2 alpha)).
        #[arg(long)]
        norm_const: Option<f64>,
    },
    /// Calibrates the clock normalisation.
    Calibrate {
        #[command(flatten)]
        ou: OuCommon,
        /// Transform arguments used in the objective (default 0.5,1,2).
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
    },
    /// Compares simulated transforms with their closed forms.
    ValidateLaplace {
        #[command(flatten)]
        ou: OuCommon,
        /// Transform arguments (default 0.5,1,2).
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        /// Clock levels s for the inverse local time (default 1).
        #[arg(long, value_delimiter = ',')]
        s_grid: Option<Vec<f64>>,
        /// Starting levels for hitting times (default 0.5,1,2).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        r0_grid: Option<Vec<f64>>,
        /// Skip calibration and use this normalisation.
        #[arg(long)]
        norm_const: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct TreeCommon {
    /// Tree specification (JSON).
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Utility family (log or power), overriding the tree file.
    #[arg(long)]
    pub family: Option<String>,
    /// Power-utility exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Utility discount rate.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum TreeCmd {
    /// Primal problem at initial wealth x.
    Solve {
        #[command(flatten)]
        tree: TreeCommon,
        /// Initial wealth (default 1).
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
    },
    /// Dual problem at y.
    Dual {
        #[command(flatten)]
        tree: TreeCommon,
        /// Dual variable (default 1).
        #[arg(long)]
        y: Option<f64>,
    },
    /// Full duality report.
    Verify {
        #[command(flatten)]
        tree: TreeCommon,
        /// Wealth grid (default offsets above -L(E)).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x_grid: Option<Vec<f64>>,
        /// Dual grid (default 0.5,1,2,5,10,100,1000).
        #[arg(long, value_delimiter = ',')]
        y_grid: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args, Default)]
pub struct LogouCommon {
    /// Initial wealth (default 1).
    #[arg(long)]
    pub x: Option<f64>,
    /// Stock drift (default 0.1).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Stock volatility (default 0.3).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Correlation of stock and index noise (default 0.7).
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// OU mean-reversion speed (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Utility discount rate (default 1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Time step (default 1e-3).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Monte Carlo paths (default 10000).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Clock normalisation; calibrated when absent.
    #[arg(long)]
    pub norm_const: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum LogouCmd {
    /// Simulates one (nu, consumption) pair.
    Simulate {
        #[command(flatten)]
        p: LogouCommon,
        /// derived, alternate or zero.
        #[arg(long)]
        nu: Option<String>,
        /// derived or alternate.
        #[arg(long)]
        consumption: Option<String>,
    },
    /// Optimal strategy against perturbations on common noise.
    Dominance {
        #[command(flatten)]
        p: LogouCommon,
    },
    /// Runs all four variant pairs and picks the consistent one.
    Discriminate {
        #[command(flatten)]
        p: LogouCommon,
    },
    /// Achieved utility against its upper bound.
    Bound {
        #[command(flatten)]
        p: LogouCommon,
    },
}
