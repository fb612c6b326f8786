use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stegokey_api::{EmbedRequest, ExtractRequest, InspectRequest, PayloadDto, WavInfo};
use stegokey_client::Client;
use stegokey_core::config::parse_churn_script;
use stegokey_core::hierarchy::{ClassId, RekeyLog, UserId};
use stegokey_core::payload::PayloadKind;
use stegokey_core::stego_wav::{WavAudio, DEFAULT_FRAME_LEN};
use stegokey_core::transport::{self, WireFrame, DEFAULT_MAX_FRAME};
use stegokey_core::Config;
use stegokey_service::AppState;
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(name = "stegokey", version, about = "Hierarchical keys and keyed WAV steganography")]
struct Cli {
    /// Authority service URL. Without it, an in-process authority is started from --config.
    #[arg(long, global = true, env = "STEGOKEY_SERVER")]
    server: Option<String>,

    /// Hierarchy/scheme config file.
    #[arg(long, global = true, env = "STEGOKEY_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print class keys and user private keys as CSV
    Keygen {
        /// Only this class
        #[arg(long)]
        class: Option<ClassId>,
    },
    /// Print the key of --target as derived by --as
    Derive {
        #[arg(long = "as")]
        as_class: ClassId,
        #[arg(long)]
        target: ClassId,
    },
    /// Seal a file and hide it in a cover WAV under a class key
    Embed {
        #[arg(long)]
        cover: PathBuf,
        #[arg(long)]
        payload: PathBuf,
        #[arg(long)]
        class: ClassId,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Image)]
        kind: Kind,
        /// Name stored in the envelope; defaults to the payload's file name
        #[arg(long)]
        name: Option<String>,
    },
    /// Recover a hidden payload as a member of --class
    Extract {
        #[arg(long)]
        class: ClassId,
        #[arg(long)]
        user: UserId,
        /// Stego WAV to open
        #[arg(long = "in")]
        input: PathBuf,
        /// Only try this class's key instead of searching own class and descendants
        #[arg(long)]
        intended: Option<ClassId>,
        /// Write the body here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send a stego WAV to one or more receivers
    Send {
        #[arg(long, value_delimiter = ',', required = true)]
        to: Vec<String>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Mark the frame as a service message
        #[arg(long)]
        service: bool,
    },
    /// Accept frames and write them to a spool directory
    Recv {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        spool: PathBuf,
        /// Stop after this many frames
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_FRAME)]
        max_frame: usize,
        /// Also open each frame as this class
        #[arg(long, requires = "user")]
        class: Option<ClassId>,
        #[arg(long, requires = "class")]
        user: Option<UserId>,
    },
    /// Apply a churn script batch by batch and print the rekey log as CSV
    SimulateChurn {
        #[arg(long)]
        script: PathBuf,
    },
    /// Show WAV format fields and stego capacity
    InspectWav {
        wav: PathBuf,
        /// Also show the embedding geometry this class's key selects
        #[arg(long)]
        class: Option<ClassId>,
        #[arg(long)]
        json: bool,
    },
    /// Run the authority service
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Image,
    Text,
    Service,
}

impl From<Kind> for PayloadKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Image => PayloadKind::Image,
            Kind::Text => PayloadKind::Text,
            Kind::Service => PayloadKind::Service,
        }
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let cli = Cli::parse();
    run(cli).await
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen { class } => {
            let listing = connect(&cli.server, &cli.config).await?.keys().await?;
            let mut csv = listing.to_csv();
            if let Some(class) = class {
                if !listing.classes.iter().any(|c| c.class == class) {
                    bail!("unknown class {class}");
                }
                let prefix = format!("{class},");
                csv = csv.lines().enumerate().filter(|(i, l)| *i == 0 || l.starts_with(&prefix)).map(|(_, l)| format!("{l}\n")).collect();
            }
            print!("{csv}");
        }
        Command::Derive { as_class, target } => {
            let key = connect(&cli.server, &cli.config).await?.derive(as_class, target).await?;
            println!("{}", key.value);
        }
        Command::Embed { cover, payload, class, out, kind, name } => {
            let client = connect(&cli.server, &cli.config).await?;
            let name = match name {
                Some(n) => n,
                None => payload.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            };
            let req = EmbedRequest {
                class,
                payload: PayloadDto { kind: kind.into(), name, body: read(&payload).await? },
                cover: read(&cover).await?,
            };
            let resp = client.embed(&req).await?;
            write(&out, &resp.stego).await?;
            eprintln!("embedded {} envelope bytes for {} at epoch {} into {}", resp.sealed_len, resp.class, resp.epoch, out.display());
        }
        Command::Extract { class, user, input, intended, out } => {
            let client = connect(&cli.server, &cli.config).await?;
            let req = ExtractRequest { class, user, intended, stego: read(&input).await? };
            let resp = client.extract(&req).await?;
            let p = &resp.payload;
            eprintln!("opened with the {} key: {:?} {:?} ({} bytes)", resp.class, p.kind, p.name, p.body.len());
            match out {
                Some(path) => write(&path, &p.body).await?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&p.body)?;
                }
            }
        }
        Command::Send { to, input, service } => {
            let body = read(&input).await?;
            if let Err(e) = WavAudio::parse(&body) {
                eprintln!("warning: {} is not a WAV the receiver can open: {e}", input.display());
            }
            let report = transport::send(&to, &WireFrame::new(body, service)).await;
            for d in &report.deliveries {
                match &d.result {
                    Ok(()) => println!("{}\tdelivered", d.target),
                    Err(e) => println!("{}\tfailed: {e}", d.target),
                }
            }
            if !report.all_delivered() {
                bail!("{} of {} deliveries failed", report.failures(), report.deliveries.len());
            }
        }
        Command::Recv { listen, spool, count, max_frame, class, user } => {
            let opener = match (class, user) {
                (Some(c), Some(u)) => Some((connect(&cli.server, &cli.config).await?, c, u)),
                _ => None,
            };
            recv(&listen, &spool, count, max_frame, opener).await?;
        }
        Command::SimulateChurn { script } => {
            let client = connect(&cli.server, &cli.config).await?;
            let text = tokio::fs::read_to_string(&script).await.with_context(|| format!("reading {}", script.display()))?;
            let batches = parse_churn_script(&text).with_context(|| format!("parsing {}", script.display()))?;
            let mut log = RekeyLog::default();
            for (i, batch) in batches.into_iter().enumerate() {
                let entry = client.apply_batch(batch).await.with_context(|| format!("batch {}", i + 1))?;
                log.events.push(entry);
            }
            print!("{}", log.to_csv());
        }
        Command::InspectWav { wav, class, json } => {
            let bytes = read(&wav).await?;
            let info = match (class, &cli.server, &cli.config) {
                // format fields and capacity need no keys
                (None, None, None) => {
                    WavInfo::new(&WavAudio::parse(&bytes).with_context(|| wav.display().to_string())?, DEFAULT_FRAME_LEN)
                }
                _ => connect(&cli.server, &cli.config).await?.inspect_wav(&InspectRequest { wav: bytes, class }).await?,
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&info)?);
            } else {
                print!("{}", info.render());
            }
        }
        Command::Serve { listen } => {
            let config = load_config(&cli.config)?;
            let listener = TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
            eprintln!("authority listening on http://{}", listener.local_addr()?);
            tokio::select! {
                r = stegokey_service::serve(listener, AppState::new(config)) => r?,
                _ = tokio::signal::ctrl_c() => eprintln!("shutting down"),
            }
        }
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    let Some(path) = path else {
        bail!("no config: pass --config <file> or --server <url>");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse().with_context(|| format!("parsing {}", path.display()))
}

/// Talks to --server if given, otherwise to a private authority on a loopback port.
async fn connect(server: &Option<String>, config: &Option<PathBuf>) -> Result<Client> {
    if let Some(url) = server {
        let url = if url.contains("://") { url.clone() } else { format!("http://{url}") };
        return Ok(Client::new(url));
    }
    let config = load_config(config)?;
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(stegokey_service::serve(listener, AppState::new(config)));
    Ok(Client::new(format!("http://{addr}")))
}

async fn recv(
    listen: &str,
    spool: &Path,
    count: Option<usize>,
    max_frame: usize,
    opener: Option<(Client, ClassId, UserId)>,
) -> Result<()> {
    tokio::fs::create_dir_all(spool).await.with_context(|| format!("creating {}", spool.display()))?;
    let listener = TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
    println!("listening on {}", listener.local_addr()?);
    let mut frames = transport::receive(listener, max_frame);
    let mut seq = 0usize;
    while count.is_none_or(|n| seq < n) {
        let received = tokio::select! {
            r = frames.recv() => match r {
                Some(r) => r,
                None => break,
            },
            _ = tokio::signal::ctrl_c() => break,
        };
        let frame = match received.frame {
            Ok(f) => f,
            Err(e) => {
                eprintln!("{}: rejected frame: {e}", received.peer);
                continue;
            }
        };
        seq += 1;
        let stem = format!("frame-{seq:06}{}", if frame.is_service() { ".service" } else { "" });
        let path = spool.join(format!("{stem}.wav"));
        write(&path, &frame.body).await?;
        let mut line = format!("{}\t{}\t{} bytes", path.display(), received.peer, frame.body.len());
        if let Some((client, class, user)) = &opener {
            let req = ExtractRequest { class: *class, user: *user, intended: None, stego: frame.body };
            match client.extract(&req).await {
                Ok(resp) => {
                    let out = spool.join(format!("{stem}.payload"));
                    write(&out, &resp.payload.body).await?;
                    line.push_str(&format!("\topened as {} -> {} {:?}", resp.class, out.display(), resp.payload.name));
                }
                Err(e) => line.push_str(&format!("\tnot opened: {e}")),
            }
        }
        println!("{line}");
    }
    Ok(())
}

async fn read(path: &Path) -> Result<Vec<u8>> {
    tokio::fs::read(path).await.with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary sibling so readers never see a partial file.
async fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    tokio::fs::write(&tmp, bytes).await.with_context(|| format!("writing {}", path.display()))?;
    tokio::fs::rename(&tmp, path).await.with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
