use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use treecollage_cli::commands;
use treecollage_cli::service::{self, ServiceOptions};
use treecollage_cli::{exit_code, RunOptions};

#[derive(Parser)]
#[command(name = "treecollage", version, about = "Property-tree image collage layouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Collection manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Shape override: a PNG mask or a JSON shape object.
    #[arg(long)]
    shape: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Recorded in the layout document.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn options(self, focus_id: Option<String>) -> RunOptions {
        RunOptions {
            manifest: self.manifest,
            shape: self.shape,
            config: self.config,
            seed: self.seed,
            focus_id,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Lay out a collection.
    Layout {
        #[command(flatten)]
        common: Common,
        /// Layout document path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        focus_id: Option<String>,
    },
    /// Re-root a stored layout at an image and lay it out again.
    Focus {
        #[command(flatten)]
        common: Common,
        /// Previous layout document.
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        focus_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check a manifest, shape and config.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        focus_id: Option<String>,
    },
    /// Print per-level objective curves.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        focus_id: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Relative paths in uploaded manifests resolve here.
        #[arg(long)]
        base_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), treecollage_core::Error> {
    match cli.command {
        Command::Layout { common, out, svg, focus_id } => {
            commands::layout(&common.options(focus_id), out.as_deref(), svg.as_deref())?;
        }
        Command::Focus { common, layout, focus_id, out, svg } => {
            commands::focus(&common.options(Some(focus_id)), &layout, out.as_deref(), svg.as_deref())?;
        }
        Command::Validate { common, focus_id } => println!("{}", commands::validate(&common.options(focus_id))?),
        Command::Trace { common, focus_id } => print!("{}", commands::trace(&common.options(focus_id))?),
        Command::Serve { port, bind, data_dir, base_dir } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|source| treecollage_core::Error::Io {
                path: "runtime".into(),
                source,
            })?;
            runtime
                .block_on(service::serve(SocketAddr::new(bind, port), ServiceOptions { data_dir, base_dir }))
                .map_err(|source| treecollage_core::Error::Io {
                    path: format!("{bind}:{port}"),
                    source,
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
