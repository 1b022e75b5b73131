use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idcre::bounds::{
    log2_family_size, message_entropy_bound, repetition_bound, symbol_leak_bound, threshold_m, unlinkable_entropy,
    LinearBound,
};
use idcre::idcode::{estimate_lambda2, Lambda2Mode};
use idcre::oracle::{self, CaptureMode, PosteriorOptions, DEFAULT_BUDGET};
use idcre::protocol::{impersonation_rate, simulate_sessions, ChannelModel, DevicePolicy};
use idcre::{seeded_rng, CodeParams, Error, Field};

const PRESET_L: [u64; 3] = [257, 512, 2048];

/// Bounds, protocol simulation and exact code-recovery experiments for
/// Reed-Solomon identification codes.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the closed-form entropy lower bounds and where they reach zero.
    ///
    /// CSV columns: q,n,k,bound,M,l,log2_family,bound_bits,crossing,threshold,exhausted.
    /// `crossing` is the real M at which the bound is zero and `threshold` its floor;
    /// both are empty for bounds that do not decrease in M.
    Bounds(Common),
    /// Run honest protocol sessions and report acceptance, limit events and
    /// optionally the second-kind error. The transcript is written as JSON lines.
    Simulate(SimulateArgs),
    /// Eavesdrop on M messages, enumerate the code family and report the exact
    /// posterior entropy next to the matching closed-form bound.
    ///
    /// CSV columns: M,l,prior_bits,posterior_bits,bound_bits,consistent_codes,map_size,map_hit.
    Cre(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Field order: a prime below 2^32, or a power of two written as 2^m (m <= 64).
    #[arg(short = 'q', value_parser = parse_order)]
    q: Option<u128>,
    /// Code length (number of evaluation points).
    #[arg(short = 'n')]
    n: Option<usize>,
    /// Message polynomial dimension.
    #[arg(short = 'k')]
    k: Option<usize>,
    /// q = 2^64, n = 2048, k = 256.
    #[arg(long, conflicts_with_all = ["q", "n", "k"])]
    paper: bool,
    /// Observed message counts: comma separated values or inclusive ranges like 1..20.
    #[arg(long = "M", value_parser = parse_counts, value_delimiter = ',')]
    m: Vec<Vec<u64>>,
    /// Repetition orders for linkable captures.
    #[arg(long = "l", value_delimiter = ',')]
    l: Vec<u64>,
    /// Symbol error probability of the symmetric channel.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Largest code family the exact posterior may enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Output file (CSV for bounds and cre, JSON lines for simulate).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Also estimate the second-kind error with this many trials.
    #[arg(long, value_enum)]
    lambda2: Option<Lambda2Arg>,
    /// Interrogate one device repeatedly instead of a fresh device per session.
    #[arg(long)]
    persistent: bool,
    /// Keep device ids in the transcript.
    #[arg(long)]
    linkable: bool,
    /// Also measure how often random responses pass the reader's check.
    #[arg(long)]
    impersonation: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Lambda2Arg {
    Random,
    Adversarial,
}

fn parse_order(s: &str) -> Result<u128, String> {
    if let Some(exp) = s.strip_prefix("2^") {
        let m: u32 = exp.parse().map_err(|e| format!("bad exponent {exp:?}: {e}"))?;
        if m == 0 || m > 64 {
            return Err(format!("exponent {m} outside 1..=64"));
        }
        return Ok(1u128 << m);
    }
    s.parse().map_err(|e| format!("bad field order {s:?}: {e}"))
}

fn parse_counts(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad count {t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

enum Failure {
    Usage(String),
    Budget(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Budget { .. } => Failure::Budget(e.to_string()),
            Error::Io(_) => Failure::Other(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

impl Common {
    fn params(&self) -> Outcome<CodeParams> {
        if self.paper {
            return Ok(CodeParams::rfid_2_64());
        }
        let (Some(q), Some(n), Some(k)) = (self.q, self.n, self.k) else {
            return Err(Failure::Usage("give -q, -n and -k, or --paper".into()));
        };
        Ok(CodeParams::new(Field::with_order(q)?, n, k)?)
    }

    fn counts(&self) -> Vec<u64> {
        self.m.iter().flatten().copied().collect()
    }

    fn channel(&self) -> Outcome<ChannelModel> {
        Ok(ChannelModel::symmetric(self.eps)?)
    }

    fn check_l(&self, params: &CodeParams) -> Outcome<()> {
        for &l in &self.l {
            if l == 0 || l > params.n() as u64 {
                return Err(Failure::Usage(format!("l = {l} must satisfy 1 <= l <= n = {}", params.n())));
            }
        }
        Ok(())
    }
}

fn fmt_bits(x: f64) -> String {
    format!("{x:.6}")
}

/// Rows of strings printed as an aligned table and optionally written as CSV.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn emit(&self, out: Option<&PathBuf>) -> Outcome<()> {
        if let Some(path) = out {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let stdout = io::stdout();
        let mut o = stdout.lock();
        let line = |o: &mut dyn Write, cells: &mut dyn Iterator<Item = &str>| -> io::Result<()> {
            let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(o, "{}", parts.join("  ").trim_end())
        };
        line(&mut o, &mut self.header.iter().copied())?;
        for row in &self.rows {
            line(&mut o, &mut row.iter().map(String::as_str))?;
        }
        Ok(())
    }
}

fn cmd_bounds(c: &Common) -> Outcome<()> {
    let params = c.params()?;
    c.check_l(&params)?;
    let (q, n, k) = (params.q(), params.n() as u64, params.k() as u64);
    let family = log2_family_size(q, n)?;
    let counts = if c.m.is_empty() { vec![0] } else { c.counts() };
    let ls: Vec<u64> = if !c.l.is_empty() {
        c.l.clone()
    } else if c.paper {
        PRESET_L.to_vec()
    } else if k < n {
        vec![k + 1]
    } else {
        Vec::new()
    };

    let mut table = Table {
        header: vec!["q", "n", "k", "bound", "M", "l", "log2_family", "bound_bits", "crossing", "threshold", "exhausted"],
        rows: Vec::new(),
    };
    let mut push = |name: &str, m: u64, l: Option<u64>, bits: f64, linear: Option<LinearBound>| -> Outcome<()> {
        if bits > family + 1e-9 {
            return Err(Failure::Other(format!(
                "{name} bound {bits} exceeds the prior {family} at M = {m}; refusing to write the row"
            )));
        }
        let threshold = match linear {
            Some(b) if b.slope(q, n, k)? > 0.0 => Some(threshold_m(b, q, n, k)?),
            _ => None,
        };
        table.rows.push(vec![
            q.to_string(),
            n.to_string(),
            k.to_string(),
            name.to_string(),
            m.to_string(),
            l.map(|l| l.to_string()).unwrap_or_default(),
            fmt_bits(family),
            fmt_bits(bits),
            threshold.map(|t| format!("{:.4}", t.crossing)).unwrap_or_default(),
            threshold.map(|t| t.last_informative.to_string()).unwrap_or_default(),
            (bits < 0.0).to_string(),
        ]);
        Ok(())
    };
    for &m in &counts {
        let mf = m as f64;
        push("symbol_leak", m, None, symbol_leak_bound(q, n, mf)?, Some(LinearBound::SymbolLeak))?;
        push("message_entropy", m, None, message_entropy_bound(q, n, mf)?, Some(LinearBound::MessageEntropy))?;
        push("unlinkable_exact", m, None, unlinkable_entropy(q, n)?, None)?;
        for &l in &ls {
            if m % l == 0 {
                push("repetition", m, Some(l), repetition_bound(q, n, k, m, l)?, Some(LinearBound::Repetition { l }))?;
            }
        }
    }
    table.emit(c.out.as_ref())
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome<()> {
    let c = &a.common;
    let params = c.params()?;
    if c.trials == 0 {
        return Err(Failure::Usage("trials must be at least 1".into()));
    }
    let channel = c.channel()?;
    let policy = if a.persistent { DevicePolicy::Persistent } else { DevicePolicy::Fresh };
    let mut rng = seeded_rng(c.seed);
    let (tally, transcript) = simulate_sessions(&params, c.trials, &channel, policy, a.linkable, &mut rng)?;

    let mut report = serde_json::json!({
        "q": params.q().to_string(),
        "n": params.n(),
        "k": params.k(),
        "eps": channel.eps(),
        "seed": c.seed,
        "sessions": c.trials,
        "mutual_accept": tally.mutual_accept,
        "cld_reject": tally.cld_reject,
        "reader_reject": tally.reader_reject,
        "limit_events": tally.limit,
        "acceptance_rate": tally.acceptance_rate(),
    });
    if let Some(mode) = a.lambda2 {
        let mode = match mode {
            Lambda2Arg::Random => Lambda2Mode::Random,
            Lambda2Arg::Adversarial => Lambda2Mode::Adversarial,
        };
        let est = estimate_lambda2(&params, c.trials, mode, &mut rng)?;
        report["lambda2"] = serde_json::json!({
            "mode": format!("{mode:?}").to_lowercase(),
            "trials": est.trials,
            "accepted": est.accepted,
            "rate": est.rate(),
            "bound": params.lambda2(),
        });
    }
    if a.impersonation {
        report["impersonation_rate"] = serde_json::json!(impersonation_rate(&params, c.trials, &mut rng)?);
    }
    if let Some(path) = &c.out {
        let mut w = BufWriter::new(File::create(path)?);
        transcript.write_jsonl(&mut w)?;
        w.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report is plain data"));
    Ok(())
}

fn cmd_cre(c: &Common) -> Outcome<()> {
    let params = c.params()?;
    c.check_l(&params)?;
    let size = oracle::family_size(params.q(), params.n());
    if !matches!(size, Some(s) if s <= u128::from(c.budget)) {
        return Err(Error::Budget {
            family_bits: log2_family_size(params.q(), params.n() as u64)?,
            family_size: size,
            budget: c.budget,
        }
        .into());
    }
    if c.l.len() > 1 {
        return Err(Failure::Usage("cre takes a single --l".into()));
    }
    let mode = match c.l.first() {
        Some(&l) => CaptureMode::Linkable { repetitions: l as usize },
        None => CaptureMode::Unlinkable,
    };
    let l = mode.block_len() as u64;
    let counts = if c.m.is_empty() { (1..=20).map(|m| m * l).collect() } else { c.counts() };
    if let Some(&bad) = counts.iter().find(|&&m| m % l != 0) {
        return Err(Failure::Usage(format!("l = {l} does not divide M = {bad}")));
    }
    let channel = c.channel()?;
    let max = counts.iter().copied().max().unwrap_or(0) as usize;

    let mut rng = seeded_rng(c.seed);
    let code = idcre::IdCode::sample(&params, &mut rng);
    let transcript = oracle::collect_for_code(&params, &code, mode, max, &channel, &mut rng)?;
    let options = PosteriorOptions { budget: c.budget, channel };

    let mut table = Table {
        header: vec!["M", "l", "prior_bits", "posterior_bits", "bound_bits", "consistent_codes", "map_size", "map_hit"],
        rows: Vec::new(),
    };
    for &m in &counts {
        let blocks = transcript.truncated_messages(m as usize).blocks();
        let report = oracle::exact_posterior(&params, &blocks, &options)?;
        let bound = repetition_bound(params.q(), params.n() as u64, params.k() as u64, m, l)?;
        if bound > report.prior_bits + 1e-9 {
            return Err(Failure::Other(format!(
                "bound {bound} exceeds the prior {} at M = {m}; refusing to write the row",
                report.prior_bits
            )));
        }
        let hit = oracle::map_guess(&params, &report).contains(&code);
        table.rows.push(vec![
            m.to_string(),
            l.to_string(),
            fmt_bits(report.prior_bits),
            fmt_bits(report.posterior_bits),
            fmt_bits(bound),
            report.consistent_code_count.to_string(),
            report.map_size.to_string(),
            hit.to_string(),
        ]);
    }
    table.emit(c.out.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds(c) => cmd_bounds(c),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Cre(c) => cmd_cre(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
