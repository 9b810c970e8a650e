//! Tuning sidecar: a live pipeline asks for a configuration to try
//! (`suggest`), runs a batch of queries with it, and sends the outcomes back
//! (`report`). Each session owns one learner and its random stream, so a
//! snapshot taken at any point resumes with identical behaviour.

pub mod api;
pub mod clock;
pub mod error;
pub mod manager;
pub mod session;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{Result, ServiceError};
pub use manager::SessionManager;
pub use session::{Report, SessionSpec, SessionState, Snapshot, Suggestion};

/// Periodic snapshot-to-file settings.
#[derive(Debug, Clone)]
pub struct Persistence {
    pub dir: PathBuf,
    pub every: Duration,
}

/// Serve until ctrl-c. With persistence, sessions found in the directory
/// are loaded first and all sessions are written back on every tick and on
/// shutdown.
pub async fn serve(
    listener: tokio::net::TcpListener,
    manager: Arc<SessionManager>,
    persistence: Option<Persistence>,
) -> std::io::Result<()> {
    if let Some(p) = &persistence {
        if p.dir.is_dir() {
            let n = manager.load_dir(&p.dir)?;
            log::info!("loaded {n} sessions from {}", p.dir.display());
        }
        let (manager, p) = (manager.clone(), p.clone());
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(p.every);
            tick.tick().await;
            loop {
                tick.tick().await;
                if let Err(e) = manager.persist_all(&p.dir) {
                    log::error!("snapshot to {} failed: {e}", p.dir.display());
                }
            }
        });
    }
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(manager.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(p) = &persistence {
        manager.persist_all(&p.dir)?;
    }
    Ok(())
}
