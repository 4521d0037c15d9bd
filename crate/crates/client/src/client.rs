use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use qbmvae::energy::BoltzmannMachine;
use qbmvae::model::NegativeSampler;
use qbmvae::samplers::{SampleSet, VariableKind};

use crate::error::{ClientError, ErrorCode};
use crate::protocol::{
    read_frame, write_frame, Message, SampleJob, SampleResult, SamplerSpec, ServerInfo, DEFAULT_MAX_FRAME,
};

/// A blocking connection to the sampling service. One request is in
/// flight at a time.
#[derive(Debug)]
pub struct Client {
    stream: TcpStream,
    max_frame: usize,
}

impl Client {
    /// Connects, trying each resolved address in turn. `timeout` bounds the
    /// connect and every subsequent read and write.
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self, ClientError> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(ClientError::Io)?.collect();
        let mut last = None;
        for a in &addrs {
            match TcpStream::connect_timeout(a, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout)).map_err(ClientError::Io)?;
                    stream.set_write_timeout(Some(timeout)).map_err(ClientError::Io)?;
                    stream.set_nodelay(true).map_err(ClientError::Io)?;
                    return Ok(Self {
                        stream,
                        max_frame: DEFAULT_MAX_FRAME,
                    });
                }
                Err(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
                    return Err(ClientError::Timeout)
                }
                Err(e) => last = Some((a.to_string(), e)),
            }
        }
        match last {
            Some((addr, source)) => Err(ClientError::Connect { addr, source }),
            None => Err(ClientError::Malformed("address resolved to nothing".into())),
        }
    }

    fn round_trip(&mut self, request: &Message) -> Result<Message, ClientError> {
        write_frame(&mut self.stream, request.encode().as_bytes()).map_err(ClientError::from_io)?;
        let payload = read_frame(&mut self.stream, self.max_frame)?;
        let text = String::from_utf8(payload).map_err(|_| ClientError::Malformed("response is not UTF-8".into()))?;
        let reply = Message::decode(&text)?;
        if reply.kind() == "error" {
            let code: ErrorCode = reply.parse_field("code")?;
            return Err(ClientError::Remote {
                code,
                message: reply.get("message").unwrap_or("").to_string(),
            });
        }
        Ok(reply)
    }

    pub fn hello(&mut self) -> Result<ServerInfo, ClientError> {
        ServerInfo::from_message(&self.round_trip(&Message::new("hello"))?)
    }

    /// Submits one job and waits for its result.
    pub fn submit(&mut self, job: &SampleJob) -> Result<SampleResult, ClientError> {
        let result = SampleResult::from_message(&self.round_trip(&job.to_message())?)?;
        if result.job_id != job.job_id {
            return Err(ClientError::JobMismatch {
                expected: job.job_id,
                got: result.job_id,
            });
        }
        Ok(result)
    }
}

/// One-shot submission on a fresh connection.
pub fn client_submit<A: ToSocketAddrs>(addr: A, job: &SampleJob, timeout: Duration) -> Result<SampleSet, ClientError> {
    Ok(Client::connect(addr, timeout)?.submit(job)?.samples)
}

/// Negative-phase sampler that forwards every request to the service.
/// The connection is opened lazily and reused.
#[derive(Debug)]
pub struct ServiceSampler {
    addr: String,
    timeout: Duration,
    spec: SamplerSpec,
    conn: Mutex<(Option<Client>, u64)>,
}

impl ServiceSampler {
    pub fn new(addr: impl Into<String>, spec: SamplerSpec, timeout: Duration) -> Self {
        Self {
            addr: addr.into(),
            timeout,
            spec,
            conn: Mutex::new((None, 0)),
        }
    }

    fn request(&self, bm: &BoltzmannMachine, n_samples: usize, seed: u64) -> Result<SampleSet, ClientError> {
        let mut guard = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let (conn, next_id) = &mut *guard;
        *next_id += 1;
        let job = SampleJob {
            job_id: *next_id,
            bm: bm.clone(),
            kind: VariableKind::Binary,
            n_samples,
            sampler: self.spec.clone(),
            seed,
        };
        if conn.is_none() {
            *conn = Some(Client::connect(self.addr.as_str(), self.timeout)?);
        }
        let result = conn.as_mut().expect("connection was just opened").submit(&job);
        if result.is_err() {
            // Drop a connection that may be out of sync.
            *conn = None;
        }
        Ok(result?.samples)
    }
}

impl NegativeSampler for ServiceSampler {
    fn id(&self) -> &str {
        "service"
    }

    fn sample(&self, bm: &BoltzmannMachine, n_samples: usize, seed: u64) -> qbmvae::Result<SampleSet> {
        self.request(bm, n_samples, seed)
            .map_err(|e| qbmvae::Error::Sampler(format!("service at {}: {e}", self.addr)))
    }
}
