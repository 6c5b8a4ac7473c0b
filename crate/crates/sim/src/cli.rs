//! `vanet-gka` command line. Exit codes: 0 success, 1 validation error,
//! 2 protocol failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vanet_gka::auth::{HelloOutcome, RsuAuth, VehicleAuth, DEFAULT_DELTA_MAX_MS};
use vanet_gka::codec::WireMessage;
use vanet_gka::cost::{delay_table, overhead_table, PrimitiveTimings};
use vanet_gka::gka::run_agreement;
use vanet_gka::group_key::{GroupState, MemberState, NeighborGkStore};
use vanet_gka::params::Profile;
use vanet_gka::ta::{display_tid, refresh_vehicle_epoch, Keystore, Location, Pseudonym, TaState};

use crate::config::ScenarioConfig;
use crate::sweep::{sweep_reports, write_rows, SweepRow};

#[derive(Debug)]
enum CliError {
    Validation(String),
    Protocol(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Protocol(_) => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn protocol(e: impl std::fmt::Display) -> CliError {
    CliError::Protocol(e.to_string())
}

type CliResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "vanet-gka", version, about = "Group key agreement and authentication for vehicular networks")]
struct Cli {
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trust-authority registry operations.
    #[command(subcommand)]
    Ta(TaCmd),
    /// RSU-to-RSU key agreement.
    #[command(subcommand)]
    Gka(GkaCmd),
    /// Vehicle-to-RSU authentication.
    #[command(subcommand)]
    Auth(AuthCmd),
    /// Analytic cost model.
    #[command(subcommand)]
    Cost(CostCmd),
    /// Run the discrete-event simulator.
    Simulate(SimulateArgs),
    /// Wire-format tools.
    #[command(subcommand)]
    Codec(CodecCmd),
}

#[derive(Subcommand, Debug)]
enum TaCmd {
    /// Create a fresh registry.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "desk64")]
        profile: Profile,
    },
    /// Register an RSU and print its beacon.
    RegisterRsu {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tid: String,
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, default_value_t = 0.0)]
        y: f64,
    },
    /// Register a vehicle.
    RegisterVehicle {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tid: String,
    },
    /// Recover the identity behind a pseudonym.
    Trace {
        #[arg(long)]
        dir: PathBuf,
        /// Pseudonym, 84 hex digits.
        #[arg(long)]
        fid: String,
        /// Epoch public key, hex of the fixed-width element encoding.
        #[arg(long)]
        pk: String,
    },
}

#[derive(Subcommand, Debug)]
enum GkaCmd {
    /// Run the two-round agreement among `n` RSUs and print every member's key.
    Run {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "desk64")]
        profile: Profile,
    },
}

#[derive(Subcommand, Debug)]
enum AuthCmd {
    /// Full handshake, group join, then fast-path re-admission at a neighbour.
    Demo {
        #[arg(long, default_value = "desk64")]
        profile: Profile,
    },
}

#[derive(Subcommand, Debug)]
enum CostCmd {
    /// Delay table per scheme and side; the overhead table goes to `<stem>_overhead.csv`.
    Table {
        #[arg(long, default_value_t = 100)]
        n_max: u64,
        #[arg(long, default_value_t = 10)]
        step: u64,
        /// Delay CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON; missing fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// CSV with columns n, delay_ms, overhead_bytes.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated vehicle counts; defaults to the config's `n_vehicles`.
    #[arg(long, value_delimiter = ',')]
    densities: Vec<usize>,
    /// Full JSON report(s).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CodecCmd {
    /// Decode a message from a binary or hex file and print it.
    Dump {
        file: PathBuf,
        #[arg(long, default_value = "desk64")]
        profile: Profile,
    },
}

/// Parses `argv` (program name first) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let seed = cli.seed;
    let result = match cli.command {
        Command::Ta(c) => ta(c, seed.unwrap_or(1)),
        Command::Gka(GkaCmd::Run { n, profile }) => gka_run(n, profile, seed.unwrap_or(1)),
        Command::Auth(AuthCmd::Demo { profile }) => auth_demo(profile, seed.unwrap_or(1)),
        Command::Cost(CostCmd::Table { n_max, step, out }) => cost_table(n_max, step, out.as_deref()),
        Command::Simulate(a) => simulate(a, seed),
        Command::Codec(CodecCmd::Dump { file, profile }) => codec_dump(&file, profile),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Validation(m) => eprintln!("error: {m}"),
                CliError::Protocol(m) => eprintln!("protocol failure: {m}"),
            }
            e.code()
        }
    }
}

fn ta(cmd: TaCmd, seed: u64) -> CliResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match cmd {
        TaCmd::Init { dir, profile } => {
            let ta = TaState::init(profile, &mut rng).map_err(invalid)?;
            let ks = Keystore {
                ta_secret: ta.secret().clone(),
                credentials: Vec::new(),
            };
            ta.save(&dir, &ks).map_err(invalid)?;
            println!("registry initialised in {} ({profile:?})", dir.display());
            println!("PK_TA = {}", ta.params().pk_ta_g.value());
        }
        TaCmd::RegisterRsu { dir, tid, x, y } => {
            let (mut ta, mut ks) = TaState::load(&dir).map_err(invalid)?;
            let (creds, beacon) = ta
                .register_rsu(tid.as_bytes(), Location::from_meters(x, y), &mut rng)
                .map_err(invalid)?;
            ks.credentials.push(creds);
            ta.save(&dir, &ks).map_err(invalid)?;
            print!("{}", WireMessage::Beacon(beacon).pretty(ta.group()));
        }
        TaCmd::RegisterVehicle { dir, tid } => {
            let (mut ta, mut ks) = TaState::load(&dir).map_err(invalid)?;
            let creds = ta.register_vehicle(tid.as_bytes()).map_err(invalid)?;
            println!("registered {} Q_V = {}", display_tid(&creds.tid), creds.q_u.value());
            ks.credentials.push(creds);
            ta.save(&dir, &ks).map_err(invalid)?;
        }
        TaCmd::Trace { dir, fid, pk } => {
            let (ta, _) = TaState::load(&dir).map_err(invalid)?;
            let fid = hex::decode(fid.trim())
                .ok()
                .and_then(|b| Pseudonym::from_slice(&b))
                .ok_or_else(|| invalid("--fid must be 84 hex digits"))?;
            let pk = hex::decode(pk.trim()).map_err(invalid)?;
            let pk = ta.group().decode_elem(&pk).map_err(invalid)?;
            let tid = ta.trace(&fid, &pk).map_err(protocol)?;
            println!("{}", display_tid(&tid));
        }
    }
    Ok(())
}

fn gka_run(n: usize, profile: Profile, seed: u64) -> CliResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = profile.group().map_err(invalid)?;
    if n < 2 {
        return Err(invalid("--n must be at least 2"));
    }
    let members: Vec<_> = (0..n)
        .map(|i| (format!("RSU-{i}").into_bytes(), g.random_nonzero_scalar(&mut rng)))
        .collect();
    let run = run_agreement(&g, &members, &mut rng).map_err(protocol)?;
    for m in run.round1.iter() {
        println!("round1 {}", display_tid(&m.tid));
    }
    for m in run.round2.iter() {
        println!("round2 {} tokens={}", display_tid(&m.tid), m.tokens.len());
    }
    for (tid, sk) in &run.keys {
        println!("member {} sk={}", display_tid(tid), sk.value());
    }
    Ok(())
}

fn auth_demo(profile: Profile, seed: u64) -> CliResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ta = TaState::init(profile, &mut rng).map_err(invalid)?;
    let params = ta.params().clone();
    let g = params.group.clone();
    let (ca, beacon_a) = ta
        .register_rsu(b"RSU-A", Location::from_meters(250.0, 0.0), &mut rng)
        .map_err(invalid)?;
    let (cb, beacon_b) = ta
        .register_rsu(b"RSU-B", Location::from_meters(750.0, 0.0), &mut rng)
        .map_err(invalid)?;
    let car = ta.register_vehicle(b"CAR-1").map_err(invalid)?;
    let show = |m: &WireMessage| print!("{}", m.pretty(&g));

    // RSUs agree on a backbone key.
    let keypairs = [&ca, &cb].map(|c| (c.tid.clone(), c.keypair.as_ref().expect("RSU key pair").sk.clone()));
    let sk = run_agreement(&g, &keypairs, &mut rng).map_err(protocol)?.keys[&ca.tid].clone();
    println!("RSU backbone key established");

    // Full handshake at A.
    let mut rsu_a = RsuAuth::new(params.clone(), ca.clone(), DEFAULT_DELTA_MAX_MS).map_err(protocol)?;
    let ep = refresh_vehicle_epoch(&car, &params, &mut rng).map_err(protocol)?;
    show(&WireMessage::Beacon(beacon_a.clone()));
    let mut v = VehicleAuth::from_beacon(&params, &beacon_a).map_err(protocol)?;
    let hello = v.hello(&ep, None, 1_000, &mut rng).map_err(protocol)?;
    show(&hello);
    let WireMessage::Hello(h) = &hello else { unreachable!() };
    let out = rsu_a.process_hello(h, 1_005, [], &mut rng).map_err(protocol)?;
    show(out.reply());
    let WireMessage::Challenge(m3) = out.reply() else {
        return Err(protocol("expected a challenge"));
    };
    let m4 = v.confirm(&car, m3, &mut rng).map_err(protocol)?;
    show(&m4);
    let WireMessage::Confirm(m4) = &m4 else { unreachable!() };
    let acc = rsu_a.process_confirm(m4, &mut rng).map_err(protocol)?;
    show(&acc);
    let WireMessage::AuthAccept(acc) = &acc else { unreachable!() };
    println!("vehicle state: {:?}", v.accept(acc).map_err(protocol)?);

    // Join A's group.
    let mut group_a = GroupState::new();
    let mut member = MemberState::from_auth(&g, &v, &mut rng).map_err(protocol)?;
    let pag1 = member.offer(&g, &mut rng);
    show(&pag1);
    let WireMessage::Pag1(p1) = &pag1 else { unreachable!() };
    let keys = rsu_a.session(&ep.fid).expect("session").channel().clone();
    let rk = group_a.handle_join(&g, p1, &keys, &mut rng).map_err(protocol)?;
    let Some(WireMessage::Pag2(p2)) = rk.pag2_for(&ep.fid) else {
        return Err(protocol("no share for the joiner"));
    };
    show(&WireMessage::Pag2(p2.clone()));
    let gk = member.apply_pag2(&g, p2).map_err(protocol)?;
    println!("group key epoch {} agreed: {}", rk.epoch, Some(&gk) == group_a.gk());

    // A hands GK to B; the vehicle is re-admitted at B without pairings.
    let transfer = group_a.transfer_gk(&g, &ca.tid, &sk, &mut rng).map_err(protocol)?;
    show(&transfer);
    let WireMessage::GkTransfer(t) = &transfer else { unreachable!() };
    let mut store = NeighborGkStore::new();
    store.receive(&g, t, &sk).map_err(protocol)?;
    let mut rsu_b = RsuAuth::new(params.clone(), cb, DEFAULT_DELTA_MAX_MS).map_err(protocol)?;
    let ep2 = refresh_vehicle_epoch(&car, &params, &mut rng).map_err(protocol)?;
    let mut v2 = VehicleAuth::from_beacon(&params, &beacon_b).map_err(protocol)?;
    let hello = v2.hello(&ep2, Some(&gk), 2_000, &mut rng).map_err(protocol)?;
    show(&hello);
    let WireMessage::Hello(h) = &hello else { unreachable!() };
    let out = rsu_b.process_hello(h, 2_004, store.keys(), &mut rng).map_err(protocol)?;
    let HelloOutcome::FastPath { reply: WireMessage::AuthAccept(acc), .. } = &out else {
        return Err(protocol("fast path not taken"));
    };
    show(out.reply());
    println!("vehicle state at RSU-B: {:?}", v2.accept(acc).map_err(protocol)?);

    // TA opens the pseudonym used at B.
    println!("fid = {}", ep2.fid);
    println!("pk  = {}", hex::encode(g.elem_bytes(&ep2.pk)));
    println!("trace -> {}", display_tid(&ta.trace(&ep2.fid, &ep2.pk).map_err(protocol)?));
    Ok(())
}

fn overhead_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_overhead.csv"))
}

fn cost_table(n_max: u64, step: u64, out: Option<&Path>) -> CliResult {
    if n_max == 0 || step == 0 {
        return Err(invalid("--n-max and --step must be positive"));
    }
    let t = PrimitiveTimings::default();
    let delays = delay_table(n_max, step, &t);
    let overheads = overhead_table(n_max, step);
    match out {
        Some(path) => {
            write_csv(csv::Writer::from_path(path).map_err(invalid)?, &delays)?;
            let op = overhead_path(path);
            write_csv(csv::Writer::from_path(&op).map_err(invalid)?, &overheads)?;
            println!("wrote {} and {}", path.display(), op.display());
        }
        None => write_csv(csv::Writer::from_writer(std::io::stdout()), &delays)?,
    }
    Ok(())
}

fn write_csv<W: Write, T: serde::Serialize>(mut w: csv::Writer<W>, rows: &[T]) -> CliResult {
    for r in rows {
        w.serialize(r).map_err(invalid)?;
    }
    w.flush().map_err(invalid)
}

fn simulate(a: SimulateArgs, seed: Option<u64>) -> CliResult {
    let mut cfg = ScenarioConfig::load(&a.config).map_err(invalid)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let densities = if a.densities.is_empty() {
        vec![cfg.n_vehicles]
    } else {
        a.densities.clone()
    };
    let reports = sweep_reports(&cfg, &densities, &[cfg.rng_seed]).map_err(invalid)?;
    let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from).collect();
    let file = fs::File::create(&a.out).map_err(invalid)?;
    write_rows(&rows, file).map_err(invalid)?;
    for r in &reports {
        println!(
            "n={} delay_ms={} overhead_bytes={} auth={} fastpath={} rekeys={} failed_auths={}",
            r.n_vehicles,
            r.average_delay_ms.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into()),
            r.total_overhead_bytes,
            r.auth_count,
            r.fastpath_count,
            r.rekey_count,
            r.failed_auths
        );
    }
    if let Some(p) = a.report {
        fs::write(&p, serde_json::to_vec_pretty(&reports).map_err(invalid)?).map_err(invalid)?;
    }
    Ok(())
}

fn codec_dump(file: &Path, profile: Profile) -> CliResult {
    let raw = fs::read(file).map_err(|e| invalid(format!("{}: {e}", file.display())))?;
    // Hex text is accepted as well as raw bytes.
    let bytes = std::str::from_utf8(&raw)
        .ok()
        .map(|s| s.split_whitespace().collect::<String>())
        .and_then(|s| hex::decode(s).ok())
        .unwrap_or(raw);
    let g = profile.group().map_err(invalid)?;
    let msg = WireMessage::decode(&g, &bytes).map_err(invalid)?;
    print!("{}", msg.pretty(&g));
    Ok(())
}
