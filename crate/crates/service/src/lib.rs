//! TCP sampling service for the `qsrv/1` protocol.
//!
//! Each connection is a sequence of request/response frames. Sampling runs
//! on the blocking pool, with at most `worker_count` jobs at once; every
//! job carries its own seed, so results do not depend on scheduling. Bad
//! input never takes the server down: it gets an `error` message back.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use qbmvae_client::protocol::{error_message, DEFAULT_MAX_FRAME};
use qbmvae_client::{ClientError, ErrorCode, Message, SampleJob, SampleResult, ServerInfo};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{oneshot, Semaphore};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    /// Largest accepted number of variables.
    pub max_problem_size: usize,
    /// Jobs sampled concurrently; further jobs wait.
    pub worker_count: usize,
    pub max_frame: usize,
    /// Cap on `n_samples · n` per job.
    pub max_sample_entries: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            max_problem_size: 1024,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_frame: DEFAULT_MAX_FRAME,
            max_sample_entries: 50_000_000,
        }
    }
}

struct Shared {
    cfg: ServerConfig,
    permits: Semaphore,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub async fn bind<A: ToSocketAddrs>(addr: A, cfg: ServerConfig) -> io::Result<Self> {
        if cfg.worker_count == 0 || cfg.max_problem_size == 0 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "worker_count and max_problem_size must be positive",
            ));
        }
        let listener = TcpListener::bind(addr).await?;
        let permits = Semaphore::new(cfg.worker_count);
        Ok(Self {
            listener,
            shared: Arc::new(Shared { cfg, permits }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until `shutdown` resolves.
    pub async fn run_until<F: Future<Output = ()>>(self, shutdown: F) -> io::Result<()> {
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = self.listener.accept() => {
                    let (stream, _) = match accepted {
                        Ok(conn) => conn,
                        // Per-connection accept failures (e.g. reset before
                        // accept) are not fatal to the listener.
                        Err(_) => continue,
                    };
                    let shared = Arc::clone(&self.shared);
                    tokio::spawn(async move {
                        let _ = handle_connection(stream, shared).await;
                    });
                }
            }
        }
    }
}

async fn write_message(stream: &mut TcpStream, msg: &Message) -> io::Result<()> {
    let body = msg.encode();
    stream.write_all(&(body.len() as u32).to_be_bytes()).await?;
    stream.write_all(body.as_bytes()).await?;
    stream.flush().await
}

async fn handle_connection(mut stream: TcpStream, shared: Arc<Shared>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    loop {
        let mut len = [0u8; 4];
        match stream.read_exact(&mut len).await {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        let len = u32::from_be_bytes(len) as usize;
        if len > shared.cfg.max_frame {
            // The stream cannot be resynchronized without reading the
            // oversized body, so answer and close.
            let msg = error_message(
                ErrorCode::Malformed,
                None,
                &format!("frame of {len} bytes exceeds the limit of {}", shared.cfg.max_frame),
            );
            write_message(&mut stream, &msg).await?;
            return Ok(());
        }
        let mut payload = vec![0u8; len];
        stream.read_exact(&mut payload).await?;
        let reply = respond(&payload, &shared).await;
        write_message(&mut stream, &reply).await?;
    }
}

fn failure(e: &ClientError, job_id: Option<u64>) -> Message {
    let text = match e {
        ClientError::Remote { message, .. } => message.clone(),
        other => other.to_string(),
    };
    error_message(e.code(), job_id, &text)
}

async fn respond(payload: &[u8], shared: &Shared) -> Message {
    let Ok(text) = std::str::from_utf8(payload) else {
        return error_message(ErrorCode::Malformed, None, "payload is not UTF-8");
    };
    let msg = match Message::decode(text) {
        Ok(m) => m,
        Err(e) => return failure(&e, None),
    };
    let job_id = msg.get("job_id").and_then(|v| v.parse().ok());
    match msg.kind() {
        "hello" => ServerInfo {
            version: qbmvae_client::VERSION.into(),
            max_problem_size: shared.cfg.max_problem_size,
            workers: shared.cfg.worker_count,
        }
        .to_message(),
        "sample" => run_job(&msg, shared).await.unwrap_or_else(|e| failure(&e, job_id)),
        other => error_message(ErrorCode::Malformed, job_id, &format!("unknown message type `{other}`")),
    }
}

async fn run_job(msg: &Message, shared: &Shared) -> Result<Message, ClientError> {
    let job = SampleJob::from_message(msg, shared.cfg.max_problem_size)?;
    let entries = job.n_samples.saturating_mul(job.bm.n());
    if entries > shared.cfg.max_sample_entries {
        return Err(ClientError::Remote {
            code: ErrorCode::Capacity,
            message: format!(
                "{entries} sample entries exceed the limit of {}",
                shared.cfg.max_sample_entries
            ),
        });
    }
    let _permit = shared.permits.acquire().await.map_err(|_| ClientError::Remote {
        code: ErrorCode::Internal,
        message: "server is shutting down".into(),
    })?;
    let job_id = job.job_id;
    let start = Instant::now();
    let samples = tokio::task::spawn_blocking(move || job.execute())
        .await
        .map_err(|e| ClientError::Remote {
            code: ErrorCode::Internal,
            message: format!("sampler task failed: {e}"),
        })??;
    Ok(SampleResult {
        job_id,
        samples,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
    .to_message())
}

/// A server running on its own runtime thread. Dropping the handle stops it.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the runtime thread.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("service thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Binds `addr` and serves on a background thread.
pub fn spawn(addr: &str, cfg: ServerConfig) -> io::Result<ServiceHandle> {
    let rt = runtime()?;
    let server = rt.block_on(Server::bind(addr, cfg))?;
    let bound = server.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("qsrv".into()).spawn(move || {
        rt.block_on(server.run_until(async {
            let _ = rx.await;
        }))
    })?;
    Ok(ServiceHandle {
        addr: bound,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Binds `addr`, reports the bound address, then serves until Ctrl-C.
pub fn serve(addr: &str, cfg: ServerConfig, on_bound: impl FnOnce(SocketAddr)) -> io::Result<()> {
    let rt = runtime()?;
    rt.block_on(async {
        let server = Server::bind(addr, cfg).await?;
        on_bound(server.local_addr()?);
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
