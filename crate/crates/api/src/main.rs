use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use innerpond_api::runner::{self, RunError, RunOptions};
use innerpond_api::{router, AppState};
use innerpond_core::clock::SystemClock;
use innerpond_core::gateway::{Provider, ProviderConfig};
use innerpond_core::locale::Locale;
use innerpond_core::SessionConfig;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "innerpond", version, about = "InnerPond service and headless runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Remote,
    Scripted,
}

#[derive(clap::Args)]
struct ProviderArgs {
    /// Text-generation backend. `remote` reads INNERPOND_API_KEY,
    /// INNERPOND_ENDPOINT and INNERPOND_MODEL from the environment.
    #[arg(long, value_enum, default_value = "scripted")]
    provider: ProviderArg,
    /// Fixture file for the scripted provider.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Model name for the remote provider; overrides INNERPOND_MODEL.
    #[arg(long)]
    model: Option<String>,
    /// Output language tag for generated content, e.g. `en` or `ko`.
    #[arg(long, default_value = "en")]
    locale: String,
}

impl ProviderArgs {
    fn build(&self) -> anyhow::Result<Arc<dyn Provider>> {
        let mut config = match self.provider {
            ProviderArg::Scripted => {
                let path = self
                    .fixtures
                    .clone()
                    .context("--fixtures is required with --provider scripted")?;
                ProviderConfig::scripted(path)
            }
            ProviderArg::Remote => ProviderConfig::remote_from_env(),
        };
        if let Some(model) = &self.model {
            config.model_name = model.clone();
        }
        config.build().context("cannot configure provider")
    }

    fn session_config(&self) -> SessionConfig {
        SessionConfig::new(Locale::from_tag(&self.locale))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Where session logs, state and snapshots are kept. Without it
        /// sessions live in memory only.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run a scripted session without the HTTP layer.
    Run {
        #[arg(long)]
        presurvey: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        session_id: Option<String>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve {
            port,
            data_dir,
            provider,
        } => match serve(port, data_dir, provider) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            presurvey,
            script,
            data_dir,
            session_id,
            provider,
        } => {
            let built = match provider.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let opts = RunOptions {
                presurvey,
                script,
                data_dir,
                session_id,
                config: provider.session_config(),
                provider: built,
                clock: Arc::new(SystemClock),
            };
            match runner::run(opts) {
                Ok(report) => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "session_id": report.session_id,
                            "events": report.events,
                            "snapshots": report.snapshots,
                        })
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => report_failure(&e),
            }
        }
    }
}

fn report_failure(e: &RunError) -> ExitCode {
    match e.code() {
        Some(code) => eprintln!("error[{code}]: {e}"),
        None => eprintln!("error: {e}"),
    }
    ExitCode::from(e.exit_code())
}

fn serve(port: u16, data_dir: Option<PathBuf>, provider: ProviderArgs) -> anyhow::Result<()> {
    let built = provider.build()?;
    if let Some(dir) = &data_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let state = AppState::new(built, provider.session_config(), data_dir);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .with_context(|| format!("cannot bind port {port}"))?;
        tracing::info!(port, "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
            .context("server failed")
    })
}
