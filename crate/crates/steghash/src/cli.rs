//! Command-line surface. Every subcommand parses flags, calls one library
//! entry point and formats the result; no protocol logic lives here.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::chaingen::derive_key;
use crate::courier::{publish_chain, read_chain, resolve_next_service, CourierConfig, NoiseCarriers};
use crate::osnfabric::{FabricState, ServiceConfig};
use crate::permcode::{stats_table, CodecKind, Dictionary};
use crate::stegimg::HEADER_LEN;
use crate::watchdog::{capacity, detect, format_bytes, DetectorConfig};

type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "steghash",
    version,
    about = "Hide data in hashtag permutations across a simulated social-network fabric",
    color = clap::ColorChoice::Never
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Address-width table: permutations, bits and wasted space per n.
    Stats {
        #[arg(long = "n-max")]
        n_max: u8,
        #[arg(long)]
        json: bool,
    },
    /// Dictionary files.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Address <-> tag-order codecs.
    #[command(subcommand)]
    Addr(AddrCommand),
    /// Keyed chain walks.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Fabric store lifecycle.
    #[command(subcommand)]
    Fabric(FabricCommand),
    /// Publish a message file along the chain.
    Publish {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, env = "STEGHASH_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long = "start-service")]
        start_service: String,
        /// Fragment size in bytes.
        #[arg(long)]
        m: u16,
        /// Message file (raw bytes).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = CodecArg::Factoradic)]
        codec: CodecArg,
        #[arg(long = "max-retries", default_value_t = 8)]
        max_retries: u32,
        /// Comma-separated account pool, used round-robin.
        #[arg(long, value_delimiter = ',', default_value = "courier0,courier1,courier2")]
        accounts: Vec<String>,
        /// Seed for the generated carrier images.
        #[arg(long = "carrier-seed", default_value_t = 0)]
        carrier_seed: u64,
        /// Write the publish report as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Read a published chain back into a file.
    Read {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, env = "STEGHASH_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long = "start-service")]
        start_service: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = CodecArg::Factoradic)]
        codec: CodecArg,
    },
    /// Flag chain-like posting behavior in a fabric.
    Detect {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long = "min-tagset", default_value_t = 4)]
        min_tagset: usize,
        #[arg(long = "min-reps", default_value_t = 3)]
        min_reps: usize,
        /// Burst window in simulated seconds.
        #[arg(long, default_value_t = 3600)]
        window: u64,
        #[arg(long = "burst-rate", default_value_t = 3)]
        burst_rate: usize,
        #[arg(long)]
        json: bool,
    },
    /// Storage ceiling of one dictionary: n! posts of m bytes.
    Capacity {
        #[arg(long)]
        n: u8,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum DictCommand {
    /// Build and validate a dictionary from tag and service lists.
    New {
        /// One hashtag per line.
        #[arg(long = "tags-file")]
        tags_file: PathBuf,
        /// One service name per line, aligned with the tags file.
        #[arg(long = "services-file")]
        services_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AddrCommand {
    /// Decode an address into its tag order.
    Unrank {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        address: u128,
        #[arg(long, value_enum, default_value_t = CodecArg::Factoradic)]
        codec: CodecArg,
        #[arg(long)]
        json: bool,
    },
    /// Encode a tag order back into its address.
    Rank {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, value_enum, default_value_t = CodecArg::Factoradic)]
        codec: CodecArg,
        #[arg(required = true, num_args = 1..)]
        tags: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum ChainCommand {
    /// List chain positions with their tag orders and service hops.
    Show {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, env = "STEGHASH_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long, default_value_t = 0)]
        start: u128,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value_t = CodecArg::Factoradic)]
        codec: CodecArg,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum FabricCommand {
    /// Create an empty fabric store.
    Init {
        /// JSON service configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Summarize a fabric store.
    Show {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CodecArg {
    Factoradic,
    Paper,
}

impl From<CodecArg> for CodecKind {
    fn from(arg: CodecArg) -> Self {
        match arg {
            CodecArg::Factoradic => CodecKind::Factoradic,
            CodecArg::Paper => CodecKind::Table,
        }
    }
}

/// On-disk shape of the `fabric init --config` file.
#[derive(serde::Deserialize)]
struct FabricConfigFile {
    services: Vec<ServiceConfig>,
    #[serde(default = "default_post_interval")]
    post_interval_secs: u64,
}

fn default_post_interval() -> u64 {
    1
}

/// Advisory single-writer lock on a fabric directory.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, Box<dyn std::error::Error>> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(format!(
                "fabric directory {} is locked by another writer (remove {} if stale)",
                dir.display(),
                path.display()
            )
            .into()),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Parse `args` and execute. Returns the process exit code: 0 on success,
/// 1 for domain errors, 2 for usage errors.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let rendered = err.render().to_string();
            return if err.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                2
            } else {
                // --help / --version
                let _ = write!(stdout, "{rendered}");
                0
            };
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Stats { n_max, json } => cmd_stats(n_max, json, out),
        Command::Dict(DictCommand::New { tags_file, services_file, out: path }) => {
            cmd_dict_new(&tags_file, &services_file, &path, out)
        }
        Command::Addr(AddrCommand::Unrank { dict, address, codec, json }) => {
            cmd_unrank(&dict, address, codec.into(), json, out)
        }
        Command::Addr(AddrCommand::Rank { dict, codec, tags, json }) => {
            cmd_rank(&dict, codec.into(), &tags, json, out)
        }
        Command::Chain(ChainCommand::Show { dict, password, start, count, codec, json }) => {
            cmd_chain_show(&dict, &password, start, count, codec.into(), json, out)
        }
        Command::Fabric(FabricCommand::Init { config, seed, dir }) => {
            cmd_fabric_init(&config, seed, &dir, out)
        }
        Command::Fabric(FabricCommand::Show { dir, json }) => cmd_fabric_show(&dir, json, out),
        Command::Publish {
            dir,
            dict,
            password,
            start_service,
            m,
            input,
            codec,
            max_retries,
            accounts,
            carrier_seed,
            report,
        } => cmd_publish(
            &dir,
            &dict,
            &password,
            &start_service,
            m,
            &input,
            codec.into(),
            max_retries,
            accounts,
            carrier_seed,
            report.as_deref(),
            out,
        ),
        Command::Read { dir, dict, password, start_service, out: out_path, codec } => {
            cmd_read(&dir, &dict, &password, &start_service, &out_path, codec.into(), out)
        }
        Command::Detect { dir, min_tagset, min_reps, window, burst_rate, json } => {
            let cfg = DetectorConfig {
                min_tagset_size: min_tagset,
                min_repetitions: min_reps,
                window_secs: window,
                burst_rate,
            };
            cmd_detect(&dir, &cfg, json, out)
        }
        Command::Capacity { n, m, json } => cmd_capacity(n, m, json, out),
    }
}

fn cmd_stats(n_max: u8, json: bool, out: &mut dyn Write) -> CliResult {
    let rows = stats_table(n_max)?;
    if json {
        let values: Vec<_> = rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "n": r.n,
                    "permutations": r.permutations,
                    "address_bits": r.address_bits,
                    "wasted_percent": r.wasted_percent(),
                })
            })
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&values)?)?;
    } else {
        writeln!(out, "{:>3} {:>42} {:>5} {:>7}", "n", "permutations", "bits", "wasted")?;
        for r in rows {
            writeln!(
                out,
                "{:>3} {:>42} {:>5} {:>7}",
                r.n,
                r.permutations,
                r.address_bits,
                r.wasted_percent()
            )?;
        }
    }
    Ok(())
}

fn cmd_dict_new(tags_file: &Path, services_file: &Path, out_path: &Path, out: &mut dyn Write) -> CliResult {
    let read_lines = |path: &Path| -> Result<Vec<String>, std::io::Error> {
        Ok(std::fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect())
    };
    let tags = read_lines(tags_file)?;
    let services = read_lines(services_file)?;
    if tags.len() != services.len() {
        return Err(format!(
            "{} tags but {} services; the files must align line by line",
            tags.len(),
            services.len()
        )
        .into());
    }
    let dict = Dictionary::new(tags.into_iter().zip(services))?;
    dict.save(out_path)?;
    writeln!(out, "dictionary of {} tags -> {}", dict.len(), out_path.display())?;
    Ok(())
}

fn cmd_unrank(dict_path: &Path, address: u128, codec: CodecKind, json: bool, out: &mut dyn Write) -> CliResult {
    let dict = Dictionary::load(dict_path)?;
    let perm = dict.unrank(&dict.address(address)?, codec)?;
    if json {
        writeln!(
            out,
            "{}",
            serde_json::json!({
                "address": address,
                "tags": perm.tags(),
                "next_service": resolve_next_service(&perm, &dict)?,
            })
        )?;
    } else {
        writeln!(out, "{perm}")?;
    }
    Ok(())
}

fn cmd_rank(dict_path: &Path, codec: CodecKind, tags: &[String], json: bool, out: &mut dyn Write) -> CliResult {
    let dict = Dictionary::load(dict_path)?;
    let address = dict.rank(tags, codec)?;
    if json {
        writeln!(out, "{}", serde_json::json!({ "address": address.value() }))?;
    } else {
        writeln!(out, "{}", address.value())?;
    }
    Ok(())
}

fn cmd_chain_show(
    dict_path: &Path,
    password: &str,
    start: u128,
    count: usize,
    codec: CodecKind,
    json: bool,
    out: &mut dyn Write,
) -> CliResult {
    let dict = Dictionary::load(dict_path)?;
    let key = derive_key(password, dict.size())?;
    let positions = key.chain(start, count);
    if json {
        let rows: Vec<_> = positions
            .iter()
            .map(|p| -> Result<_, Box<dyn std::error::Error>> {
                let perm = dict.unrank(&p.address, codec)?;
                Ok(serde_json::json!({
                    "step": p.step,
                    "address": p.address.value(),
                    "tags": perm.tags(),
                    "next_service": resolve_next_service(&perm, &dict)?,
                }))
            })
            .collect::<Result<_, _>>()?;
        writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        for p in positions {
            let perm = dict.unrank(&p.address, codec)?;
            writeln!(
                out,
                "step {:>4}  addr {:>6}  {} -> {}",
                p.step,
                p.address.value(),
                perm,
                resolve_next_service(&perm, &dict)?
            )?;
        }
    }
    Ok(())
}

fn cmd_fabric_init(config: &Path, seed: u64, dir: &Path, out: &mut dyn Write) -> CliResult {
    let text = std::fs::read_to_string(config)?;
    let parsed: FabricConfigFile = serde_json::from_str(&text)?;
    let _lock = DirLock::acquire(dir)?;
    if dir.join("fabric.json").exists() {
        return Err(format!("{} already holds a fabric store", dir.display()).into());
    }
    let mut fabric = FabricState::new(parsed.services, seed)?;
    fabric.set_post_interval(parsed.post_interval_secs);
    fabric.save(dir)?;
    writeln!(
        out,
        "fabric with {} services (seed {seed}) -> {}",
        fabric.services().len(),
        dir.display()
    )?;
    Ok(())
}

fn cmd_fabric_show(dir: &Path, json: bool, out: &mut dyn Write) -> CliResult {
    let fabric = FabricState::load(dir)?;
    if json {
        writeln!(
            out,
            "{}",
            serde_json::json!({
                "services": fabric.services(),
                "posts": fabric.posts().len(),
                "clock": fabric.clock(),
                "seed": fabric.seed(),
            })
        )?;
    } else {
        writeln!(out, "seed {}  clock {}s  posts {}", fabric.seed(), fabric.clock(), fabric.posts().len())?;
        for svc in fabric.services() {
            writeln!(
                out,
                "  {:<12} arity {:>2}  sanitize {:>4}  rate {}/h",
                svc.name, svc.search_arity, svc.sanitize_prob, svc.rate_limit
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_publish(
    dir: &Path,
    dict_path: &Path,
    password: &str,
    start_service: &str,
    m: u16,
    input: &Path,
    codec: CodecKind,
    max_retries: u32,
    accounts: Vec<String>,
    carrier_seed: u64,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let _lock = DirLock::acquire(dir)?;
    let mut fabric = FabricState::load(dir)?;
    let dict = Dictionary::load(dict_path)?;
    let key = derive_key(password, dict.size())?;
    let cfg = CourierConfig {
        fragment_size: m,
        start_service: start_service.to_string(),
        codec,
        max_retries_per_fragment: max_retries,
        account_pool: accounts,
    };
    let message = std::fs::read(input)?;
    let mut carriers = NoiseCarriers::sized_for(HEADER_LEN + m as usize, carrier_seed);
    let report = publish_chain(&mut fabric, &dict, &key, &cfg, &message, &mut carriers)?;
    fabric.save(dir)?;
    if let Some(path) = report_path {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    writeln!(
        out,
        "published {} fragments in {} posts ({} decoys, {} addresses consumed)",
        report.fragments.len(),
        report.posts_published,
        report.decoys_left,
        report.addresses_consumed
    )?;
    Ok(())
}

fn cmd_read(
    dir: &Path,
    dict_path: &Path,
    password: &str,
    start_service: &str,
    out_path: &Path,
    codec: CodecKind,
    out: &mut dyn Write,
) -> CliResult {
    let fabric = FabricState::load(dir)?;
    let dict = Dictionary::load(dict_path)?;
    let key = derive_key(password, dict.size())?;
    let cfg = CourierConfig {
        fragment_size: 1, // unused by the reader; totals come from the frames
        start_service: start_service.to_string(),
        codec,
        max_retries_per_fragment: 0,
        account_pool: vec!["reader".to_string()],
    };
    let message = read_chain(&fabric, &dict, &key, &cfg)?;
    std::fs::write(out_path, &message)?;
    writeln!(out, "read {} bytes -> {}", message.len(), out_path.display())?;
    Ok(())
}

fn cmd_detect(dir: &Path, cfg: &DetectorConfig, json: bool, out: &mut dyn Write) -> CliResult {
    let fabric = FabricState::load(dir)?;
    let report = detect(&fabric, cfg);
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        writeln!(out, "flagged groups: {}", report.groups.len())?;
        for group in &report.groups {
            let mut line = String::new();
            write!(
                line,
                "score {:>5}  orderings {:>4}  services {}  posts {:>5}  peak {:>4}/window  ",
                group.score,
                group.distinct_orderings,
                group.services.len(),
                group.post_ids.len(),
                group.peak_window_posts
            )?;
            line.push_str(&group.tags.join(" "));
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn cmd_capacity(n: u8, m: u64, json: bool, out: &mut dyn Write) -> CliResult {
    let bytes = capacity(n, m)?;
    if json {
        writeln!(
            out,
            "{}",
            serde_json::json!({ "bytes": bytes, "human": format_bytes(bytes) })
        )?;
    } else if bytes < 1024 {
        writeln!(out, "{bytes} bytes")?;
    } else {
        writeln!(out, "{bytes} bytes ({})", format_bytes(bytes))?;
    }
    Ok(())
}
