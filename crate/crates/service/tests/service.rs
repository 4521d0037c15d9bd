use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use qbmvae::energy::BoltzmannMachine;
use qbmvae::model::{history_csv, train, LocalSampler, ModelSpec, QbmVaeModel, SamplerChoice, TrainConfig, TrainData};
use qbmvae::rng::Philox;
use qbmvae::samplers::{gibbs_sample, AnnealSchedule, GibbsConfig, VariableKind};
use qbmvae_client::{Client, ClientError, ErrorCode, SampleJob, SamplerSpec, ServiceSampler};
use qbmvae_service::{spawn, ServerConfig, ServiceHandle};

const TIMEOUT: Duration = Duration::from_secs(30);

fn start() -> ServiceHandle {
    spawn(
        "127.0.0.1:0",
        ServerConfig {
            max_problem_size: 64,
            worker_count: 4,
            ..ServerConfig::default()
        },
    )
    .unwrap()
}

fn bm(n: usize, seed: u64) -> BoltzmannMachine {
    BoltzmannMachine::random_init(n, 0, 0.5, &mut Philox::new(seed, 0)).unwrap()
}

/// Energy straight from the definition, independent of the library.
fn naive_energy(bm: &BoltzmannMachine, z: &[i8]) -> f64 {
    let n = z.len();
    let mut e = 0.0;
    for l in 0..n {
        e += bm.biases()[l] * f64::from(z[l]);
        for m in l + 1..n {
            e += bm.couplings()[(l, m)] * f64::from(z[l]) * f64::from(z[m]);
        }
    }
    e
}

fn raw_exchange(stream: &mut TcpStream, payload: &[u8]) -> String {
    stream.write_all(&(payload.len() as u32).to_be_bytes()).unwrap();
    stream.write_all(payload).unwrap();
    let mut len = [0u8; 4];
    stream.read_exact(&mut len).unwrap();
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    stream.read_exact(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn gibbs_job(n: usize, seed: u64, job_id: u64) -> SampleJob {
    SampleJob {
        job_id,
        bm: bm(n, seed),
        kind: VariableKind::Binary,
        n_samples: 200,
        sampler: SamplerSpec::Gibbs(GibbsConfig {
            n_samples: 200,
            n_sweeps: 2,
            burn_in: 50,
            temperature: 1.0,
            n_chains: 4,
        }),
        seed,
    }
}

#[test]
fn hello_reports_version_and_capacity() {
    let srv = start();
    let info = Client::connect(srv.addr(), TIMEOUT).unwrap().hello().unwrap();
    assert_eq!(info.version, "qsrv/1");
    assert_eq!(info.max_problem_size, 64);
    assert_eq!(info.workers, 4);
}

#[test]
fn remote_gibbs_equals_in_process_gibbs() {
    let srv = start();
    let job = gibbs_job(10, 3, 1);
    let remote = Client::connect(srv.addr(), TIMEOUT)
        .unwrap()
        .submit(&job)
        .unwrap()
        .samples;
    let SamplerSpec::Gibbs(cfg) = &job.sampler else {
        unreachable!()
    };
    let local = gibbs_sample(&job.bm, cfg, job.seed).unwrap();
    assert_eq!(remote, local);
    assert_eq!(remote.raw(), local.raw());
    assert_eq!(
        remote.energies().iter().map(|e| e.to_bits()).collect::<Vec<_>>(),
        local.energies().iter().map(|e| e.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn same_request_bytes_give_same_response_bytes() {
    let srv = start();
    let body = gibbs_job(8, 5, 77).to_message().encode();
    let strip = |s: String| {
        s.lines()
            .filter(|l| !l.starts_with("elapsed_ms="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut a = TcpStream::connect(srv.addr()).unwrap();
    let mut b = TcpStream::connect(srv.addr()).unwrap();
    let ra = strip(raw_exchange(&mut a, body.as_bytes()));
    let rb = strip(raw_exchange(&mut b, body.as_bytes()));
    assert!(ra.starts_with("type=result\nversion=qsrv/1\njob_id=77\n"));
    assert_eq!(ra, rb);
}

#[test]
fn one_spin_job_returns_both_states() {
    let srv = start();
    let job = SampleJob {
        job_id: 1,
        bm: BoltzmannMachine::zeros(1, 0).unwrap(),
        kind: VariableKind::Spin,
        n_samples: 64,
        sampler: SamplerSpec::Exact,
        seed: 2,
    };
    let s = qbmvae_client::client_submit(srv.addr(), &job, TIMEOUT).unwrap();
    assert_eq!(s.n(), 1);
    assert!(s.raw().contains(&1) && s.raw().contains(&-1));
}

#[test]
fn eight_clients_hundred_jobs_each() {
    let srv = start();
    let addr = srv.addr();
    let handles: Vec<_> = (0..8u64)
        .map(|c| {
            std::thread::spawn(move || {
                let mut client = Client::connect(addr, TIMEOUT).unwrap();
                let mut rng = Philox::new(1000 + c, 0);
                for j in 0..100u64 {
                    let n = 2 + rng.below(11) as usize;
                    let seed = c * 1000 + j;
                    let kind = if rng.below(2) == 0 {
                        VariableKind::Binary
                    } else {
                        VariableKind::Spin
                    };
                    let sampler = match rng.below(3) {
                        0 => SamplerSpec::Gibbs(GibbsConfig {
                            n_samples: 20,
                            burn_in: 10,
                            ..GibbsConfig::default()
                        }),
                        1 => SamplerSpec::Sa(AnnealSchedule::default_for(n)),
                        _ => SamplerSpec::Exact,
                    };
                    let job = SampleJob {
                        job_id: c << 32 | j,
                        bm: bm(n, seed),
                        kind,
                        n_samples: 20,
                        sampler,
                        seed,
                    };
                    let r = client.submit(&job).unwrap();
                    assert_eq!(r.job_id, job.job_id);
                    assert_eq!(r.samples.len(), 20);
                    for (row, &e) in r.samples.rows().zip(r.samples.energies()) {
                        let z: Vec<i8> = match kind {
                            VariableKind::Binary => row.to_vec(),
                            VariableKind::Spin => row.iter().map(|&s| (s + 1) / 2).collect(),
                        };
                        let want = naive_energy(&job.bm, &z);
                        // Spin energies omit the constant of the change of variables.
                        let got = match kind {
                            VariableKind::Binary => e,
                            VariableKind::Spin => {
                                let (_, offset) = qbmvae::energy::bm_to_spin_model(&job.bm);
                                e + offset
                            }
                        };
                        assert!((got - want).abs() < 1e-9, "job {}: {got} vs {want}", job.job_id);
                    }
                    if j % 10 == 0 {
                        assert_eq!(r.samples, job.execute().unwrap());
                    }
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
}

#[test]
fn malformed_input_gets_structured_errors() {
    let srv = start();
    let mut s = TcpStream::connect(srv.addr()).unwrap();
    let r = raw_exchange(&mut s, b"\xff\xfe garbage");
    assert!(r.contains("type=error") && r.contains("code=malformed"), "{r}");
    let r = raw_exchange(&mut s, b"just some text");
    assert!(r.contains("code=malformed"), "{r}");
    let r = raw_exchange(&mut s, b"type=hello\nversion=qsrv/9\n");
    assert!(r.contains("code=version"), "{r}");
    let r = raw_exchange(&mut s, b"type=launch\nversion=qsrv/1\n");
    assert!(r.contains("code=malformed"), "{r}");
    let r = raw_exchange(&mut s, b"type=sample\nversion=qsrv/1\njob_id=4\nn=3\n");
    assert!(r.contains("code=malformed") && r.contains("job_id=4"), "{r}");
    let mut bad_temp = gibbs_job(4, 1, 5).to_message().encode();
    bad_temp = bad_temp.replace("temperature=1\n", "temperature=-1\n");
    let r = raw_exchange(&mut s, bad_temp.as_bytes());
    assert!(r.contains("code=invalid") && r.contains("job_id=5"), "{r}");
    let big = gibbs_job(65, 1, 6).to_message().encode();
    let r = raw_exchange(&mut s, big.as_bytes());
    assert!(r.contains("code=capacity"), "{r}");
    let exact_big = SampleJob {
        sampler: SamplerSpec::Exact,
        ..gibbs_job(30, 1, 7)
    };
    let r = raw_exchange(&mut s, exact_big.to_message().encode().as_bytes());
    assert!(r.contains("code=invalid"), "{r}");
    // The connection is still usable.
    let r = raw_exchange(&mut s, b"type=hello\nversion=qsrv/1\n");
    assert!(r.starts_with("type=hello\n"), "{r}");

    // An oversized frame is answered, then the connection is closed.
    let mut s = TcpStream::connect(srv.addr()).unwrap();
    s.write_all(&u32::MAX.to_be_bytes()).unwrap();
    let mut len = [0u8; 4];
    s.read_exact(&mut len).unwrap();
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    s.read_exact(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("code=malformed"));
    assert_eq!(s.read(&mut [0u8; 1]).unwrap(), 0);

    let mut client = Client::connect(srv.addr(), TIMEOUT).unwrap();
    match client.submit(&gibbs_job(65, 1, 8)) {
        Err(ClientError::Remote { code, .. }) => assert_eq!(code, ErrorCode::Capacity),
        other => panic!("{other:?}"),
    }
    assert!(client.hello().is_ok());
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let keep = std::thread::spawn(move || {
        let (conn, _) = listener.accept().unwrap();
        std::thread::sleep(Duration::from_secs(2));
        drop(conn);
    });
    let mut c = Client::connect(addr, Duration::from_millis(200)).unwrap();
    assert!(matches!(c.submit(&gibbs_job(4, 1, 1)), Err(ClientError::Timeout)));
    keep.join().unwrap();
}

#[test]
fn unreachable_host_fails_without_results() {
    // TEST-NET-1 is never routed; depending on the network stack this is a
    // timeout or an immediate connect failure.
    let r = qbmvae_client::client_submit("192.0.2.1:9", &gibbs_job(4, 1, 1), Duration::from_millis(300));
    assert!(
        matches!(r, Err(ClientError::Timeout | ClientError::Connect { .. })),
        "{r:?}"
    );
}

#[test]
fn training_through_service_matches_local_gibbs() {
    let srv = start();
    let mut rng = Philox::new(8, 0);
    let x = nalgebra::DMatrix::from_fn(60, 5, |i, j| ((i % 3) * (j + 1)) as f64 * 0.5 + rng.uniform());
    let batch: Vec<usize> = (0..60).map(|i| i % 2).collect();
    let (tx, vx) = (x.rows(0, 50).into_owned(), x.rows(50, 10).into_owned());
    let mut spec = ModelSpec::new(5, 2);
    spec.hidden = 8;
    spec.latent = 6;
    let cfg = TrainConfig {
        max_epochs: 4,
        minibatch_size: 16,
        n_negative_samples: 30,
        sampler_choice: SamplerChoice::Gibbs,
        seed: 3,
        ..TrainConfig::default()
    };
    let local = LocalSampler::new(SamplerChoice::Gibbs).unwrap();
    let remote = ServiceSampler::new(srv.addr().to_string(), SamplerSpec::Gibbs(local.gibbs.clone()), TIMEOUT);
    let run = |s: &dyn qbmvae::model::NegativeSampler| {
        let model = QbmVaeModel::new(&spec, 1).unwrap();
        let out = train(
            model,
            TrainData {
                x: &tx,
                batch: &batch[..50],
            },
            TrainData {
                x: &vx,
                batch: &batch[50..],
            },
            &cfg,
            s,
        )
        .unwrap();
        (history_csv(&out.history), out.model)
    };
    let (h_local, m_local) = run(&local);
    let (h_remote, m_remote) = run(&remote);
    assert_eq!(h_local, h_remote);
    assert_eq!(m_local.prior, m_remote.prior);
}
