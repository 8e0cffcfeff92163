use std::fs;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tagpoll_core::bench::{self, ClientStrategy, EmitFormat, Report, ReportRow, RunSpec};
use tagpoll_core::gateway::{self, GatewayConfig, PORT_ENV};
use tagpoll_core::hub::{Handle, TagHub};
use tagpoll_core::security::{Actor, Role, SecurityPolicy};
use tagpoll_core::sim::{self, ChangeCount, PlantSim, SimConfig, SimMode};
use tagpoll_core::wire::{OpenRange, SetpointTargets, WireFormat};
use tagpoll_core::ScaledClock;

#[derive(Parser)]
#[command(name = "tagpoll", version, about = "Event-driven long-poll SCADA gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Drive a local hub with the plant simulator and export its change log.
    Sim(SimArgs),
    /// Manage the security store file.
    Admin(AdminArgs),
    /// Compare polling strategies.
    Bench(BenchArgs),
}

fn parse_duration(s: &str) -> Result<Duration, String> {
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

fn parse_handles(s: &str) -> Result<Vec<Handle>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .ok()
                .and_then(Handle::new)
                .ok_or_else(|| format!("bad tag handle {p:?}"))
        })
        .collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo = lo.trim().parse().map_err(|_| format!("bad bound {lo:?}"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad bound {hi:?}"))?;
    Ok((lo, hi))
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Delimited,
    Json,
}

#[derive(Args)]
struct ServeArgs {
    /// Overridden by TAGPOLL_PORT when set.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    bind: IpAddr,
    #[arg(long, default_value = "30s", value_parser = parse_duration)]
    max_wait: Duration,
    /// Tag handles written by POST /api/setpoints, in body order.
    #[arg(long, default_value = "4,5,6", value_parser = parse_handles)]
    setpoints: std::vec::Vec<Handle>,
    /// Exclusive setpoint bounds `lo:hi`.
    #[arg(long, default_value = "0:100", value_parser = parse_pair)]
    range: (f64, f64),
    /// Number of tags, registered as s1..sN.
    #[arg(long, default_value_t = 10)]
    tags: usize,
    #[arg(long, default_value = "tagpoll-security.db")]
    store: PathBuf,
    /// Directory of static HMI files.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Delimited)]
    format: Format,
    /// Take client addresses from X-Forwarded-For.
    #[arg(long)]
    trust_forwarded_for: bool,
    /// Drive the tags with the simulator: fixed:<ms>, random:<max_s> or off.
    #[arg(long, default_value = "off")]
    sim: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Random,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = Mode::Fixed)]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    interval_ms: u64,
    #[arg(long, default_value_t = 6.0)]
    max_interval_s: f64,
    /// Inclusive value range `lo:hi`.
    #[arg(long, default_value = "0:100")]
    range: String,
    /// Stop after this many changes.
    #[arg(long, default_value_t = 10)]
    count: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    tags: usize,
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdminArgs {
    #[arg(long, default_value = "tagpoll-security.db")]
    store: PathBuf,
    #[command(subcommand)]
    command: AdminCommand,
}

#[derive(Subcommand)]
enum AdminCommand {
    /// Create a user with a role and a unique secret code
    AddUser {
        #[arg(long)]
        username: String,
        #[arg(long)]
        password: String,
        #[arg(long, default_value = "user")]
        role: Role,
        #[arg(long)]
        secret: String,
    },
    /// Print users with role and login state
    ListUsers,
    /// Inspect or clear blacklisted client addresses
    Untrusted {
        #[command(subcommand)]
        command: UntrustedCommand,
    },
    /// End a user's session (only effective through the running server's admin API)
    ForceLogout {
        username: String,
    },
}

#[derive(Subcommand)]
enum UntrustedCommand {
    List,
    /// Restore access for an address
    Remove { ip: String },
}

#[derive(Args)]
struct BenchArgs {
    #[command(subcommand)]
    suite: Option<BenchSuite>,
    #[arg(long, default_value = "fixed:1000")]
    strategy: ClientStrategy,
    /// fixed:<ms>, random:<max_s> or off.
    #[arg(long, default_value = "fixed:1000")]
    sim: String,
    #[arg(long, default_value = "60s", value_parser = parse_duration)]
    duration: Duration,
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    #[arg(long, default_value_t = 1)]
    clients: usize,
    #[arg(long, default_value_t = 10)]
    vars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; the format follows the extension (.csv or text).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchSuite {
    /// Run the request, payload, inter-arrival and latency tables.
    Suite {
        #[arg(value_parser = ["tables"])]
        which: String,
        /// Compression for the count tables; latency always runs at 1.
        #[arg(long, default_value_t = 10.0)]
        time_scale: f64,
        /// Directory receiving one CSV per table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(args) => serve(args),
        Command::Sim(args) => run_sim(args),
        Command::Admin(args) => admin(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn register(hub: &TagHub, tags: usize) -> Result<()> {
    if tags == 0 {
        bail!("--tags must be at least 1");
    }
    let names: Vec<String> = (1..=tags).map(|i| format!("s{i}")).collect();
    hub.register_tags(&names)?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let port = match std::env::var(PORT_ENV) {
        Ok(v) => v.parse().with_context(|| format!("{PORT_ENV}={v:?} is not a port"))?,
        Err(_) => args.port,
    };
    let (low, high) = args.range;
    let clock = Arc::new(ScaledClock::realtime());
    let hub = Arc::new(TagHub::with_clock(clock.clone()));
    register(&hub, args.tags)?;
    let security = Arc::new(
        SecurityPolicy::open(&args.store, Default::default(), clock)
            .with_context(|| format!("opening {}", args.store.display()))?,
    );
    let config = GatewayConfig {
        bind: SocketAddr::new(args.bind, port),
        max_wait: args.max_wait,
        setpoints: SetpointTargets::uniform(args.setpoints, OpenRange { low, high }),
        wire_format: match args.format {
            Format::Delimited => WireFormat::Delimited,
            Format::Json => WireFormat::Json,
        },
        trust_forwarded_for: args.trust_forwarded_for,
        assets_dir: args.assets,
        ..GatewayConfig::default()
    };
    let sim = match bench::parse_sim(&args.sim).map_err(anyhow::Error::msg)? {
        Some(cfg) => {
            let cfg = SimConfig {
                tag_handles: (1..=args.tags.min(6) as u32).filter_map(Handle::new).collect(),
                ..cfg
            };
            Some(PlantSim::new(hub.clone(), cfg)?)
        }
        None => None,
    };

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let running = gateway::serve(config, hub, security).await?;
        if let Some(sim) = &sim {
            sim.start()?;
        }
        running.run_until_ctrl_c().await?;
        Ok::<_, anyhow::Error>(())
    })?;
    if let Some(sim) = sim {
        let _ = sim.stop();
    }
    Ok(())
}

fn run_sim(args: SimArgs) -> Result<()> {
    let (lo, hi) = args
        .range
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
        .with_context(|| format!("--range expects integer lo:hi, got {:?}", args.range))?;
    if args.time_scale <= 0.0 || !args.time_scale.is_finite() {
        bail!("--time-scale must be positive");
    }
    let clock = Arc::new(ScaledClock::new(args.time_scale));
    let hub = Arc::new(TagHub::with_clock(clock));
    register(&hub, args.tags)?;
    let config = SimConfig {
        mode: match args.mode {
            Mode::Fixed => SimMode::Fixed {
                interval_ms: args.interval_ms,
            },
            Mode::Random => SimMode::Random {
                max_interval_s: args.max_interval_s,
            },
        },
        count: ChangeCount::Limited(args.count),
        value_range: (lo, hi),
        rng_seed: args.seed,
        tag_handles: (1..=args.tags as u32).filter_map(Handle::new).collect(),
        time_scale: args.time_scale,
    };
    let plant = PlantSim::new(hub, config)?;
    plant.start()?;
    while !plant.wait_stopped(Duration::from_secs(1)) {}
    let log = plant.change_log();
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            sim::write_log_csv(&log, file)?;
            eprintln!("{} changes written to {}", log.len(), path.display());
        }
        None => sim::write_log_csv(&log, io::stdout().lock())?,
    }
    Ok(())
}

fn admin(args: AdminArgs) -> Result<()> {
    let policy = SecurityPolicy::default_open(&args.store).with_context(|| format!("opening {}", args.store.display()))?;
    match args.command {
        AdminCommand::AddUser {
            username,
            password,
            role,
            secret,
        } => {
            policy.admin_add_user(Actor::Local, &username, &password, role, &secret)?;
            println!("added {username} ({})", role.as_str());
        }
        AdminCommand::ListUsers => {
            for u in policy.admin_list_users(Actor::Local)? {
                println!("{}\t{}", u.username, u.role.as_str());
            }
        }
        AdminCommand::Untrusted {
            command: UntrustedCommand::List,
        } => {
            for u in policy.admin_list_untrusted(Actor::Local)? {
                println!("{}\t{}\t{}", u.ip, u.added_at.to_rfc3339(), u.reason.as_str());
            }
        }
        AdminCommand::Untrusted {
            command: UntrustedCommand::Remove { ip },
        } => {
            policy.admin_remove_untrusted(Actor::Local, &ip)?;
            println!("removed {ip}");
        }
        AdminCommand::ForceLogout { username } => {
            // sessions live in the server process, so the file holds none
            policy.admin_force_logout(Actor::Local, &username)?;
            println!("{username} has no stored session; use POST /api/admin/users/{username}/logout on a live server");
        }
    }
    Ok(())
}

fn write_report(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let format = if path.extension().is_some_and(|e| e == "csv") {
                EmitFormat::Csv
            } else {
                EmitFormat::Text
            };
            bench::emit(report, path, format).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("report written to {}", path.display());
        }
        None => print!("{}", report.render_text()),
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    if let Some(BenchSuite::Suite { time_scale, out, .. }) = args.suite {
        let tables = bench::suite_tables(time_scale)?;
        if let Some(dir) = &out {
            fs::create_dir_all(dir)?;
        }
        for (i, table) in tables.iter().enumerate() {
            println!("{}", table.render());
            if let Some(dir) = &out {
                let path = dir.join(format!("table{}.csv", i + 1));
                bench::emit(&table.report, &path, EmitFormat::Csv)?;
            }
        }
        return Ok(());
    }
    let sim = bench::parse_sim(&args.sim)
        .map_err(anyhow::Error::msg)?
        .map(|cfg| SimConfig {
            rng_seed: args.seed,
            ..cfg
        });
    let spec = RunSpec {
        vars: args.vars,
        ..RunSpec::new(args.strategy, sim, args.duration)
            .with_time_scale(args.time_scale)
            .with_clients(args.clients)
    };
    let metrics = bench::run(&spec)?;
    let report = Report::new(vec![ReportRow::from_run(&spec, &metrics)]);
    write_report(&report, args.out.as_ref())
}
