//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion, then fails if any criterion failed.
//!
//! Run with `cargo test -p healthledger --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::time::Instant;

use healthledger::formats;
use healthledger_core::codec::{Reader, Writer};
use healthledger_core::crypto::{argon2id_raw, open, open_with_key, seal, seal_with_key, DerivedKey, KdfCost, SealedEnvelope};
use healthledger_core::harness::{run_scenario, Desk, DeskError, RunOutput, ScenarioConfig, TraceKind, WorkloadConfig};
use healthledger_core::hash::Digest;
use healthledger_core::identity::{totp, totp_code, verify_totp, IdentityError};
use healthledger_core::keys::{cluster_keys, KeyPair, NodeId};
use healthledger_core::ledger::{AccessScope, Block, Chain, RecordTransaction, Role, TxDraft};
use healthledger_core::pbft::{max_faults, quorum_size, signing_bytes, CommitCertificate, MessageKind, Proposal, QuorumRule};
use healthledger_core::rng::seeded;
use healthledger_core::simnet::{FaultBehavior, FaultSpec, Topology};
use healthledger_core::store::{ContentStore, StoreConfig};
use rand::seq::index::sample;
use rand::Rng;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fault(node: usize, behavior: FaultBehavior) -> FaultSpec {
    FaultSpec { node: NodeId(node as u32), behavior, at_ms: 0.0, until_ms: None }
}

/// Per-run checks shared by every simulated run in the suite: the consensus
/// time breakdown and incremental-versus-replayed ledger state.
#[derive(Default)]
struct Sweep {
    runs: u64,
    commits: u64,
    breakdown_failures: Vec<String>,
    replay_failures: Vec<String>,
}

impl Sweep {
    fn run(&mut self, cfg: &ScenarioConfig) -> Result<RunOutput, String> {
        let out = run_scenario(cfg).map_err(|e| format!("{} seed {}: {e}", cfg.name, cfg.seed))?;
        self.observe(&format!("{} seed {}", cfg.name, cfg.seed), &out);
        Ok(out)
    }

    fn observe(&mut self, label: &str, out: &RunOutput) {
        self.runs += 1;
        if out.report.counts.breakdown_mismatches != 0 {
            self.breakdown_failures.push(format!("{label}: {} mismatches reported", out.report.counts.breakdown_mismatches));
        }
        for e in &out.trace {
            if let TraceKind::Commit { seq, transferred: false, pre_prepare_us, prepare_us, commit_us, total_us, .. } = e.kind {
                self.commits += 1;
                if pre_prepare_us + prepare_us + commit_us != total_us {
                    self.breakdown_failures.push(format!("{label}: seq {seq} stages do not sum to T"));
                }
            }
        }
        if &out.chain.replay_state() != out.chain.state() {
            self.replay_failures.push(format!("{label}: incremental state differs from replay"));
        }
    }
}

fn formulas() -> Verdict {
    for n in 4..=100usize {
        let (q, f) = (quorum_size(n).map_err(|e| e.to_string())?, max_faults(n));
        ensure(q == (2 * n) / 3 + 1, || format!("quorum_size({n}) = {q}"))?;
        ensure(f == (n - 1) / 3, || format!("max_faults({n}) = {f}"))?;
    }
    ensure(quorum_size(15) == Ok(11) && max_faults(15) == 4, || "N=15 spot values".into())?;
    Ok("N = 4..100, quorum_size(15) = 11, max_faults(15) = 4".into())
}

fn safety(sweep: &mut Sweep) -> Verdict {
    const RUNS: u64 = 1000;
    let kinds = [FaultBehavior::Silent, FaultBehavior::Equivocate, FaultBehavior::Delayed { extra_ms: 40.0 }];
    let mut mix = [0usize; 3];
    for n in [4usize, 7, 10, 15] {
        let f = max_faults(n);
        for i in 0..RUNS {
            let seed = n as u64 * 100_000 + i;
            let mut rng = seeded(seed ^ 0x5afe);
            let offset = rng.gen_range(0..kinds.len());
            let faults = sample(&mut rng, n, f)
                .into_iter()
                .enumerate()
                .map(|(j, node)| {
                    let k = (offset + j) % kinds.len();
                    mix[k] += 1;
                    fault(node, kinds[k].clone())
                })
                .collect();
            let cfg = ScenarioConfig {
                name: format!("safety-n{n}"),
                seed,
                nodes: n,
                duration_s: 0.5,
                drain_s: 20.0,
                stall_horizon_s: 15.0,
                workload: WorkloadConfig::registrations_only(3, 1),
                faults,
                ..ScenarioConfig::default()
            };
            let out = sweep.run(&cfg)?;
            let v = out.report.counts.safety_violations;
            ensure(v == 0, || format!("N={n} seed {seed}: {v} conflicting commits"))?;
            ensure(out.report.counts.blocks_committed > 0, || format!("N={n} seed {seed}: nothing committed"))?;
        }
    }
    Ok(format!(
        "4 x {RUNS} runs at N = 4, 7, 10, 15 with f byzantine nodes ({} silent, {} equivocating, {} delayed), 0 violations",
        mix[0], mix[1], mix[2]
    ))
}

fn liveness(sweep: &mut Sweep) -> Verdict {
    const PER_N: u64 = 50;
    let mut worst_views = 0;
    let mut txs = 0;
    for n in [4usize, 7, 10, 15] {
        let f = max_faults(n);
        for i in 0..PER_N {
            let seed = 7_000_000 + n as u64 * 1000 + i;
            let mut rng = seeded(seed ^ 0x11fe);
            let extra = rng.gen_range(0..f);
            let mut silent: BTreeSet<usize> = sample(&mut rng, n - 1, extra).into_iter().map(|x| x + 1).collect();
            silent.insert(0);
            let cfg = ScenarioConfig {
                name: format!("liveness-n{n}"),
                seed,
                nodes: n,
                duration_s: 3.0,
                drain_s: 30.0,
                stall_horizon_s: 20.0,
                workload: WorkloadConfig { patients: 4, doctors: 2, records_per_minute: 120.0, ..WorkloadConfig::default() },
                faults: silent.iter().map(|&s| fault(s, FaultBehavior::Silent)).collect(),
                ..ScenarioConfig::default()
            };
            let r = sweep.run(&cfg)?.report;
            let c = &r.counts;
            let label = format!("N={n} seed {seed} silent {silent:?}");
            ensure(!r.stalled, || format!("{label}: stalled"))?;
            ensure(c.txs_submitted > 0 && c.txs_committed == c.txs_submitted, || {
                format!("{label}: {}/{} committed", c.txs_committed, c.txs_submitted)
            })?;
            ensure(c.max_views_to_commit <= 3, || format!("{label}: took {} views", c.max_views_to_commit))?;
            worst_views = worst_views.max(c.max_views_to_commit);
            txs += c.txs_committed;
        }
    }
    Ok(format!("{} runs with a silent primary and up to f silent nodes, {txs} txs all committed, worst {worst_views} views", 4 * PER_N))
}

fn breakdown(sweep: &Sweep) -> Verdict {
    ensure(sweep.breakdown_failures.is_empty(), || sweep.breakdown_failures[..sweep.breakdown_failures.len().min(3)].join("; "))?;
    ensure(sweep.commits > 0, || "no commits observed".into())?;
    Ok(format!("T equals the sum of its stages on all {} commits across {} runs", sweep.commits, sweep.runs))
}

const GCM: &[[&str; 6]] = &[
    [
        "0000000000000000000000000000000000000000000000000000000000000000",
        "000000000000000000000000",
        "",
        "",
        "",
        "530f8afbc74536b9a963b4f1c4cb738b",
    ],
    [
        "0000000000000000000000000000000000000000000000000000000000000000",
        "000000000000000000000000",
        "00000000000000000000000000000000",
        "",
        "cea7403d4d606b6e074ec5d3baf39d18",
        "d0d1c8a799996bf0265b98b5d48ab919",
    ],
    [
        "feffe9928665731c6d6a8f9467308308feffe9928665731c6d6a8f9467308308",
        "cafebabefacedbaddecaf888",
        "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
        "feedfacedeadbeeffeedfacedeadbeefabaddad2",
        "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662",
        "76fc6ece0f4e1768cddf8853bb2d551b",
    ],
    [
        "92e11dcdaa866f5ce790fd24501f92509aacf4cb8b1339d50c9c1240935dd08b",
        "ac93a1a6145299bde902f21a",
        "2d71bcfa914e4ac045b2aa60955fad24",
        "1e0889016f67601c8ebea4943bc23ad6",
        "8995ae2e6df3dbf96fac7b7137bae67f",
        "eca5aa77d51d4a0a14d9c51e1da474ab",
    ],
];

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

fn crypto() -> Verdict {
    let cost = KdfCost { memory_kib: 32, time_cost: 3, parallelism: 4 };
    let mut out = [0u8; 32];
    argon2id_raw(&[0x01; 32], &[0x02; 16], cost, &[0x03; 8], &[0x04; 12], &mut out).map_err(|e| e.to_string())?;
    ensure(hex::encode(out) == "0d640df58d78766c08c037a34a8b53c9d01ef0452d75b65eb52520e96b01e659", || {
        format!("argon2id vector: {}", hex::encode(out))
    })?;

    for (i, [key, nonce, pt, aad, ct, tag]) in GCM.iter().enumerate() {
        let key = DerivedKey::from_raw(unhex(key).try_into().unwrap());
        let env = seal_with_key(&key, KdfCost::light().with_salt([0; 16]), unhex(nonce).try_into().unwrap(), &unhex(pt), &unhex(aad))
            .map_err(|e| e.to_string())?;
        ensure(hex::encode(&env.ciphertext) == *ct && hex::encode(env.tag) == *tag, || format!("GCM vector {i}"))?;
        ensure(open_with_key(&key, &env, &unhex(aad)).ok() == Some(unhex(pt)), || format!("GCM vector {i} open"))?;
    }

    const ROUND_TRIPS: u64 = 10_000;
    let mut rng = seeded(0xc0de);
    for i in 0..ROUND_TRIPS {
        let len = rng.gen_range(0..4096);
        let plaintext: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let password: Vec<u8> = (0..rng.gen_range(1..32)).map(|_| rng.gen()).collect();
        let ad = i.to_le_bytes();
        let env = seal(&plaintext, &password, &KdfCost::light(), &ad, &mut rng).map_err(|e| e.to_string())?;
        let back = SealedEnvelope::from_bytes(&env.to_bytes()).and_then(|e| open(&e, &password, &ad));
        ensure(back.as_deref() == Ok(plaintext.as_slice()), || format!("round trip {i} failed"))?;
    }

    let env = seal(b"diagnosis: seasonal allergy; follow-up in six weeks", b"pw", &KdfCost::light(), b"patient-7", &mut rng)
        .map_err(|e| e.to_string())?
        .to_bytes();
    let mut mutations = 0u64;
    for pos in 0..env.len() {
        for delta in 1..=255u8 {
            let mut bad = env.clone();
            bad[pos] ^= delta;
            let opened = SealedEnvelope::from_bytes(&bad).and_then(|e| open(&e, b"pw", b"patient-7"));
            ensure(opened.is_err(), || format!("mutation at byte {pos} by {delta:#04x} accepted"))?;
            mutations += 1;
        }
    }
    Ok(format!(
        "argon2id RFC 9106 and {} AES-256-GCM vectors exact, {ROUND_TRIPS} round trips, {mutations}/{mutations} single-byte mutations rejected",
        GCM.len()
    ))
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn availability() -> Verdict {
    const N: usize = 15;
    const TRIALS: u32 = 10_000;
    let topo = Topology::fully_connected(N);
    let cfg = StoreConfig { replication_factor: 3, gossip_fanout: 2, chunk_size: 1024 };
    let mut store = ContentStore::new(cfg, N).map_err(|e| e.to_string())?;
    let root = store.put(b"single chunk record", NodeId(6)).map_err(|e| e.to_string())?;
    let mut rng = seeded(0xa7a1);
    store.gossip_round(&topo, &mut rng);
    let holders: BTreeSet<usize> = store.replicas().holders(&root).map(|n| n.index()).collect();
    ensure(holders.len() == 3, || format!("{} replicas after gossip", holders.len()))?;

    let mut worst = 0.0f64;
    for k in 1..=5usize {
        // exhaustive enumeration over every kill set, in lexicographic order
        let (mut sets, mut alive) = (0u64, 0u64);
        let mut dead: Vec<usize> = (0..k).collect();
        loop {
            sets += 1;
            alive += u64::from(!holders.iter().all(|h| dead.contains(h)));
            let Some(i) = (0..k).rev().find(|&i| dead[i] < N - k + i) else { break };
            dead[i] += 1;
            for j in i + 1..k {
                dead[j] = dead[j - 1] + 1;
            }
        }
        ensure(sets as f64 == binomial(N as u64, k as u64), || format!("k={k}: {sets} kill sets"))?;
        let exhaustive = alive as f64 / sets as f64;

        let mut sum = 0.0;
        for _ in 0..TRIALS {
            let mut killed = store.clone();
            for node in sample(&mut rng, N, k) {
                killed.on_node_death(NodeId(node as u32));
            }
            sum += killed.current_availability(&root).map_err(|e| e.to_string())?;
        }
        let measured = sum / f64::from(TRIALS);
        let gap = (measured - exhaustive).abs();
        ensure(gap <= 0.01, || format!("k={k}: measured {measured:.4}, exhaustive {exhaustive:.4}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("N=15, R=3, k = 1..5, {TRIALS} trials each, largest gap {:.4} (limit 0.01)", worst))
}

const RFC6238_SECRET: &[u8] = b"12345678901234567890";

fn mfa() -> Verdict {
    let table = [
        (59u64, 94287082u32),
        (1111111109, 7081804),
        (1111111111, 14050471),
        (1234567890, 89005924),
        (2000000000, 69279037),
        (20000000000, 65353130),
    ];
    for (t, want) in table {
        ensure(totp(RFC6238_SECRET, t, 8) == want, || format!("t={t}: 8-digit code"))?;
        let six = format!("{:06}", want % 1_000_000);
        ensure(totp_code(RFC6238_SECRET, t) == six, || format!("t={t}: 6-digit code"))?;
        ensure(verify_totp(RFC6238_SECRET, &six, t, 0), || format!("t={t}: verify"))?;
        for (delta, skew, accepted) in [(30i64, 1, true), (-30, 1, true), (30, 0, false), (-30, 0, false), (60, 1, false), (-60, 1, false)]
        {
            let at = (t as i64 + delta) as u64;
            ensure(verify_totp(RFC6238_SECRET, &six, at, skew) == accepted, || {
                format!("t={t}: offset {delta}s with skew {skew} should be {}", if accepted { "accepted" } else { "rejected" })
            })?;
        }
    }
    Ok(format!("{} SHA-1 time steps exact, +/-1 step accepted with skew 1, +/-2 steps rejected", table.len()))
}

fn certify(nodes: &[KeyPair], block: &Block, quorum: usize) -> CommitCertificate {
    let (seq, digest) = (block.height(), block.digest());
    let votes = (0..quorum)
        .map(|i| {
            let id = NodeId::from(i);
            (id, nodes[i].sign(&signing_bytes(MessageKind::Commit, block.header.view, seq, &digest, id)))
        })
        .collect();
    CommitCertificate { view: block.header.view, seq, digest, votes }
}

/// About `target` transactions of registrations, record stores, grants and
/// revokes, committed fifty to a block.
fn build_chain(target: usize, seed: u64) -> Chain {
    let mut rng = seeded(seed);
    let (nodes, set) = cluster_keys(4, &mut rng);
    let mut chain = Chain::new(set, QuorumRule::TwoThirds).unwrap();
    let patients: Vec<(String, KeyPair)> = (0..6).map(|i| (format!("patient-{i}"), KeyPair::generate(&mut rng))).collect();
    let doctors: Vec<(String, KeyPair)> = (0..3).map(|i| (format!("doctor-{i}"), KeyPair::generate(&mut rng))).collect();
    let mut ts = 1u64;
    let mut pending: Vec<RecordTransaction> = Vec::new();
    for (id, k) in &patients {
        pending.push(TxDraft::register(id, Role::Patient, k.public(), ts).sign(k));
        ts += 1;
    }
    for (id, k) in &doctors {
        pending.push(TxDraft::register(id, Role::Doctor, k.public(), ts).sign(k));
        ts += 1;
    }
    let commit = |chain: &mut Chain, pending: &mut Vec<RecordTransaction>, ts: u64| {
        let built = chain.build_block(pending, NodeId(0), 0, ts * 1000, 64).unwrap();
        let cert = certify(&nodes, &built.block, 3);
        chain.apply_committed(built.block, cert).unwrap();
        pending.clear();
    };
    commit(&mut chain, &mut pending, ts);
    while chain.transaction_count() < target {
        for _ in 0..50 {
            let (pid, pk) = &patients[rng.gen_range(0..patients.len())];
            let (did, _) = &doctors[rng.gen_range(0..doctors.len())];
            let draft = match rng.gen_range(0..4) {
                0 | 1 => {
                    let addr = healthledger_core::store::ContentAddress::of(&ts.to_le_bytes());
                    TxDraft::store(pid, addr, Digest::of(&addr.0 .0), ts)
                }
                2 => TxDraft::grant(pid, did, AccessScope::AllRecords, ts),
                _ => TxDraft::revoke(pid, did, AccessScope::AllRecords, ts),
            };
            pending.push(draft.sign(pk));
            ts += 1;
        }
        commit(&mut chain, &mut pending, ts);
    }
    chain
}

fn block_bytes(block: &Block) -> Vec<u8> {
    let mut w = Writer::new();
    Proposal::encode(block, &mut w);
    w.finish()
}

fn ledger(sweep: &Sweep) -> Verdict {
    const BLOCK_MUTATIONS: usize = 1500;
    const EXPORT_MUTATIONS: usize = 3000;
    let chain = build_chain(1000, 21);
    ensure(chain.transaction_count() >= 1000, || format!("only {} transactions", chain.transaction_count()))?;
    ensure(chain.validate_chain().is_ok(), || "pristine chain rejected".into())?;
    ensure(&chain.replay_state() == chain.state(), || "incremental state differs from replay on the 1000-tx chain".into())?;

    let encoded: Vec<Vec<u8>> = chain.entries().iter().map(|e| block_bytes(&e.block)).collect();
    let total: usize = encoded.iter().map(Vec::len).sum();
    let mut rng = seeded(0x1ed9);
    let (mut undecodable, mut invalid) = (0, 0);
    for _ in 0..BLOCK_MUTATIONS {
        // uniform over every byte of every block's encoding
        let mut at = rng.gen_range(0..total);
        let height = encoded
            .iter()
            .position(|b| {
                at < b.len() || {
                    at -= b.len();
                    false
                }
            })
            .unwrap();
        let delta = rng.gen_range(1..=255u8);
        let mut bytes = encoded[height].clone();
        bytes[at] ^= delta;
        let mut r = Reader::new(&bytes);
        let decoded = <Block as Proposal>::decode(&mut r).ok().filter(|_| r.finish().is_ok());
        let Some(block) = decoded else {
            undecodable += 1;
            continue;
        };
        let mut copy = chain.clone();
        copy.entries_mut()[height].block = block;
        ensure(copy.validate_chain().is_err(), || format!("block {height} byte {at} ^ {delta:#04x} undetected"))?;
        invalid += 1;
    }

    let export = chain.export();
    for _ in 0..EXPORT_MUTATIONS {
        let mut copy = export.clone();
        let i = rng.gen_range(0..copy.len());
        copy[i] ^= rng.gen_range(1..=255u8);
        ensure(Chain::import(&copy).is_err(), || format!("export byte {i} mutation undetected"))?;
    }

    ensure(sweep.replay_failures.is_empty(), || sweep.replay_failures[..sweep.replay_failures.len().min(3)].join("; "))?;
    Ok(format!(
        "{} txs in {} blocks: {BLOCK_MUTATIONS} block mutations detected ({invalid} by validate_chain, {undecodable} undecodable), \
         {EXPORT_MUTATIONS} export mutations rejected; replay equals incremental state on {} runs",
        chain.transaction_count(),
        chain.height() + 1,
        sweep.runs
    ))
}

/// The scripted front-desk workflow. Returns the final chain export.
fn workflow_once() -> Result<Vec<u8>, String> {
    const UNIX: u64 = 1_750_000_000;
    let err = |e: DeskError| e.to_string();
    let mut desk = Desk::create(2024, 15, KdfCost::light(), UNIX).map_err(err)?;
    let mut rng = seeded(5);
    let alice = desk.register("alice", Role::Patient, b"alice-pw", &mut rng).map_err(err)?;
    let bob = desk.register("bob", Role::Doctor, b"bob-pw", &mut rng).map_err(err)?;
    let carol = desk.register("carol", Role::Doctor, b"carol-pw", &mut rng).map_err(err)?;

    let code = |d: &Desk, secret: &[u8]| totp_code(secret, d.unix_now());
    let c = code(&desk, alice.totp_secret.as_ref());
    let sa = desk.login("alice", b"alice-pw", &c).map_err(err)?;
    let plaintext = b"2024-03-02 blood panel: hemoglobin 13.9 g/dL, platelets 250k";
    let stored = desk.store_record(&sa, b"alice-record-secret", plaintext, &mut rng).map_err(err)?;
    ensure(stored.replicas == 3, || format!("{} replicas", stored.replicas))?;
    ensure(desk.chain().state().record(&stored.address).is_some(), || "record not on the ledger".into())?;

    let c = code(&desk, bob.totp_secret.as_ref());
    let sb = desk.login("bob", b"bob-pw", &c).map_err(err)?;
    let before = desk.fetch_record(&sb, "alice", stored.address, b"alice-record-secret");
    ensure(matches!(before, Err(DeskError::Identity(IdentityError::Denied(_)))), || "fetch before grant was not denied".into())?;
    desk.grant(&sa, "bob", AccessScope::AllRecords).map_err(err)?;
    let got = desk.fetch_record(&sb, "alice", stored.address, b"alice-record-secret").map_err(err)?;
    ensure(got.plaintext.as_slice() == plaintext, || "fetched plaintext differs".into())?;

    let c = code(&desk, carol.totp_secret.as_ref());
    let sc = desk.login("carol", b"carol-pw", &c).map_err(err)?;
    let other = desk.fetch_record(&sc, "alice", stored.address, b"alice-record-secret");
    ensure(matches!(other, Err(DeskError::Identity(IdentityError::Denied(_)))), || "ungranted doctor was not denied".into())?;
    ensure(desk.chain().validate_chain().is_ok(), || "desk chain invalid".into())?;
    ensure(&desk.chain().replay_state() == desk.chain().state(), || "desk state differs from replay".into())?;
    Ok(desk.chain().export())
}

fn workflow() -> Verdict {
    let first = workflow_once()?;
    let second = workflow_once()?;
    ensure(first == second, || "two runs with the same seed produced different chains".into())?;
    Ok(format!("register, seal, store at R=3, commit, granted fetch, denied fetch; identical {}-byte chain on rerun", first.len()))
}

fn determinism(sweep: &mut Sweep) -> Verdict {
    let base = ScenarioConfig {
        name: "determinism".into(),
        duration_s: 20.0,
        drain_s: 10.0,
        workload: WorkloadConfig { records_per_minute: 120.0, ..WorkloadConfig::default() },
        ..ScenarioConfig::default()
    };
    let variants = [
        vec![],
        vec![fault(0, FaultBehavior::Silent)],
        vec![
            fault(3, FaultBehavior::Equivocate),
            fault(7, FaultBehavior::CorruptStorage),
            fault(9, FaultBehavior::Delayed { extra_ms: 40.0 }),
        ],
    ];
    let mut pairs = 0;
    for (v, faults) in variants.into_iter().enumerate() {
        for seed in [1u64, 99] {
            let cfg = ScenarioConfig { seed, faults: faults.clone(), ..base.clone() };
            let bytes = |out: &RunOutput| -> Result<[Vec<u8>; 4], String> {
                let e = |e: formats::FormatError| e.to_string();
                Ok([
                    formats::report_json(&out.report).map_err(e)?,
                    formats::jsonl(&out.commit_log).map_err(e)?,
                    formats::jsonl(&out.trace).map_err(e)?,
                    out.chain.export(),
                ])
            };
            let a = bytes(&sweep.run(&cfg)?)?;
            let b = bytes(&sweep.run(&cfg)?)?;
            for (name, (x, y)) in ["report", "commit log", "trace", "chain"].iter().zip(a.iter().zip(&b)) {
                ensure(x == y, || format!("variant {v} seed {seed}: {name} differs"))?;
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} (scenario, seed) pairs: reports, commit logs, traces and chains byte-identical"))
}

fn monotonicity(sweep: &mut Sweep) -> Verdict {
    const SEEDS: u64 = 20;
    let order = [0usize, 5, 10, 3];
    let mut means = Vec::new();
    for k in 0..=order.len() {
        let mut sum = 0.0;
        for seed in 0..SEEDS {
            let cfg = ScenarioConfig {
                name: format!("degrade-{k}"),
                seed: 500 + seed,
                duration_s: 10.0,
                drain_s: 10.0,
                workload: WorkloadConfig { records_per_minute: 120.0, ..WorkloadConfig::default() },
                faults: order[..k].iter().map(|&n| fault(n, FaultBehavior::Silent)).collect(),
                ..ScenarioConfig::default()
            };
            sum += sweep.run(&cfg)?.report.metrics.consensus_efficiency_pct;
        }
        means.push(sum / SEEDS as f64);
    }
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    ensure(means.windows(2).all(|w| w[1] <= w[0]), || format!("means rise somewhere: {}", shown.join(" -> ")))?;
    Ok(format!("mean efficiency over {SEEDS} seeds for 0..4 silent nodes: {}", shown.join(" -> ")))
}

#[test]
fn acceptance() {
    let mut sweep = Sweep::default();
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let verdict = f();
        let secs = start.elapsed().as_secs_f64();
        eprintln!("  finished criterion {id} in {secs:.1}s");
        results.push((id, name, verdict, secs));
    };
    record(1, "quorum and fault-bound formulas", &mut formulas);
    record(2, "PBFT safety under byzantine faults", &mut || safety(&mut sweep));
    record(3, "PBFT liveness with a silent primary", &mut || liveness(&mut sweep));
    record(5, "crypto conformance", &mut crypto);
    record(6, "content-store availability oracle", &mut availability);
    record(7, "TOTP conformance", &mut mfa);
    record(9, "end-to-end workflow", &mut workflow);
    record(10, "determinism", &mut || determinism(&mut sweep));
    record(11, "degradation monotonicity", &mut || monotonicity(&mut sweep));
    record(4, "consensus time breakdown", &mut || breakdown(&sweep));
    record(8, "ledger integrity", &mut || ledger(&sweep));
    results.sort_by_key(|r| r.0);

    println!();
    for (id, name, verdict, secs) in &results {
        match verdict {
            Ok(detail) => println!("PASS  {id:>2}  {name}: {detail} [{secs:.1}s]"),
            Err(why) => println!("FAIL  {id:>2}  {name}: {why} [{secs:.1}s]"),
        }
    }
    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
