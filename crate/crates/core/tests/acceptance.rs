//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use casreg::analysis::{check_atomicity, concurrency_profile, is_linearizable, History, Liveness, Report};
use casreg::codec::Codec;
use casreg::harness::{self, simulate, sweep_reports};
use casreg::quorum::QuorumSystem;
use casreg::sim::config::{OpSpec, Trigger};
use casreg::sim::trace::{Event, HaltReason, Trace};
use casreg::sim::ScenarioConfig;
use casreg::types::{OpKind, Value};
use casreg::units::{format_cost, units, Cost};

use common::{bundled, load};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn run(name: &str) -> (Trace, Report) {
    simulate(&load(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn mds_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut decodes, mut failures) = (0usize, 0usize);
    for n in [3, 4, 5, 7] {
        for k in 1..n {
            let codec = Codec::from_nk(n, k).map_err(|e| e.to_string())?;
            for _ in 0..4 {
                let mut value = vec![0u8; 48];
                rng.fill(&mut value[..]);
                let shares = codec.encode(&value);
                for subset in subsets(n, k) {
                    let picked: Vec<_> = subset.iter().map(|&i| shares[i].clone()).collect();
                    decodes += 1;
                    if codec.decode_value(&picked, value.len()).ok().as_deref() != Some(&value[..]) {
                        failures += 1;
                    }
                }
            }
        }
    }
    ensure(failures == 0, || format!("{failures} of {decodes} decodes wrong"))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("{decodes} subset decodes, 0 failures, {:.1?}", start.elapsed()))
}

fn quorum_properties() -> Outcome {
    let start = Instant::now();
    let mut systems = 0;
    for n in 1..=12 {
        for f in 0..=(n - 1) / 2 {
            for k in 1..=n - 2 * f {
                let q = QuorumSystem::cas(n, f, k);
                ensure(q.verify_intersection(), || format!("intersection fails at n={n} f={f} k={k}"))?;
                ensure(q.verify_availability(), || format!("availability fails at n={n} f={f} k={k}"))?;
                systems += 1;
            }
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{systems} systems with n <= 12, 0 failures, {:.1?}", start.elapsed()))
}

fn cas_costs() -> Outcome {
    let (_, r) = run("cas_basic.json");
    let five_thirds = Ratio::new(5, 3);
    ensure(r.ledger.write_sup == five_thirds && r.ledger.read_sup == five_thirds, || {
        format!("scripted write {} read {}", format_cost(&r.ledger.write_sup), format_cost(&r.ledger.read_sup))
    })?;
    let mut worst = (units(0), units(0));
    for t in ["sweep/cas_random.json", "sweep/cas_crashes.json"] {
        for rep in sweep_reports(&load(t), 0..1000).map_err(|e| e.to_string())? {
            worst.0 = worst.0.max(rep.ledger.write_sup);
            worst.1 = worst.1.max(rep.ledger.read_sup);
        }
    }
    ensure(worst.0 <= five_thirds && worst.1 <= five_thirds, || {
        format!("sweep max write {} read {}", format_cost(&worst.0), format_cost(&worst.1))
    })?;
    Ok(format!(
        "scripted write = read = 5/3; 2000 seeded runs max write {} read {}",
        format_cost(&worst.0),
        format_cost(&worst.1)
    ))
}

fn abd_costs() -> Outcome {
    let (_, r) = run("abd_worst_case_read.json");
    let l = &r.ledger;
    ensure(l.write_sup == units(5) && l.read_sup == units(10) && l.storage_sup == units(5), || {
        format!(
            "write {} read {} storage {}",
            format_cost(&l.write_sup),
            format_cost(&l.read_sup),
            format_cost(&l.storage_sup)
        )
    })?;
    ensure(r.passed, || format!("scenario failed: {:?}", r.failures()))?;
    Ok("worst-case script: write 5, read 10, storage 5".into())
}

/// Storage just before each invocation and at halt; with writes issued
/// only at quiescence these are the totals after each completed write.
fn storage_at_invocations(trace: &Trace, r: &Report) -> Vec<Cost> {
    let mut out = Vec::new();
    let mut series = r.ledger.storage.iter().peekable();
    let mut current = units(0);
    for e in &trace.events {
        while let Some(p) = series.peek() {
            if p.seq > e.seq() {
                break;
            }
            current = p.storage;
            series.next();
        }
        if matches!(e, Event::Invoke { .. } | Event::Halt { .. }) {
            out.push(current);
        }
    }
    out
}

fn ldr_growth(f: usize) -> Result<(), String> {
    let n = 4 * f + 2;
    let mut cfg = load("ldr_basic.json");
    cfg.id = format!("ldr_growth_f{f}");
    cfg.n = n;
    cfg.f = f;
    cfg.expect = None;
    cfg.ops = (0..20)
        .map(|i| OpSpec {
            client: "w".into(),
            kind: OpKind::Write,
            value: Some(format!("v{i}")),
            at: 0,
            after: (i > 0).then_some(Trigger::Quiescent),
        })
        .collect();
    let (trace, r) = simulate(&cfg).map_err(|e| e.to_string())?;
    let points = storage_at_invocations(&trace, &r);
    let replicas = units(2 * f as u64 + 1);
    for w in points.windows(2) {
        ensure(w[1] - w[0] == replicas, || {
            format!("f={f}: storage went {} -> {}", format_cost(&w[0]), format_cost(&w[1]))
        })?;
    }
    ensure(points.len() == 21, || format!("f={f}: {} storage samples", points.len()))
}

fn ldr_costs() -> Outcome {
    for (name, f) in [("ldr_basic.json", 1u64), ("ldr_f2.json", 2)] {
        let (_, r) = run(name);
        ensure(r.ledger.write_sup == units(2 * f + 1) && r.ledger.read_sup == units(f + 1), || {
            format!(
                "f={f}: write {} read {}",
                format_cost(&r.ledger.write_sup),
                format_cost(&r.ledger.read_sup)
            )
        })?;
    }
    ldr_growth(1)?;
    ldr_growth(2)?;
    Ok("f=1 write 3 read 2, f=2 write 5 read 3; storage grows by 2f+1 per write over 20 writes".into())
}

fn ccoas_costs() -> Outcome {
    let (_, r) = run("ccoas_basic.json");
    let q = Ratio::new(5, 4);
    ensure(r.ledger.write_sup == q && r.ledger.read_sup == q, || {
        format!("write {} read {}", format_cost(&r.ledger.write_sup), format_cost(&r.ledger.read_sup))
    })?;
    Ok("write = read = 5/4".into())
}

const PROTOCOLS: [&str; 5] = ["cas", "casgc", "ccoas", "abd", "ldr"];

/// The six-operation mix used to compare the checker with the oracle.
fn small(protocol: &str) -> ScenarioConfig {
    let mut cfg = load(&format!("sweep/{protocol}_random.json"));
    cfg.id = format!("{protocol}_small");
    cfg.ops.truncate(6);
    cfg
}

fn atomicity() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for p in PROTOCOLS {
        for t in [format!("sweep/{p}_random.json"), format!("sweep/{p}_crashes.json")] {
            for r in sweep_reports(&load(&t), 0..1000).map_err(|e| e.to_string())? {
                ensure(r.atomicity.is_atomic(), || format!("{t} seed {}: {:?}", r.seed, r.atomicity))?;
                runs += 1;
            }
        }
    }

    let mut compared = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in PROTOCOLS {
        let cfg = small(p);
        for seed in 0..400 {
            let mut c = cfg.clone();
            c.scheduler.seed = seed;
            let (trace, _) = simulate(&c).map_err(|e| e.to_string())?;
            let h = History::from_trace(&trace);
            let tag_order = check_atomicity(&h).map_err(|e| e.to_string())?.is_atomic();
            let oracle = is_linearizable(&h).ok_or("oracle refused a complete history")?;
            ensure(tag_order == oracle, || format!("{p} seed {seed}: checker {tag_order}, oracle {oracle}"))?;
            compared += 1;

            // a forged return value: whenever the oracle rejects it, so must the checker
            let mut forged = h.clone();
            let reads: Vec<usize> = forged.reads().map(|o| o.index).collect();
            let victim = reads[rng.gen_range(0..reads.len())];
            let mut bytes = forged.ops[victim].value.clone().expect("read returned").0;
            bytes[0] ^= 0xff;
            forged.ops[victim].value = Some(Value(bytes));
            if is_linearizable(&forged) == Some(false) {
                ensure(!check_atomicity(&forged).map_err(|e| e.to_string())?.is_atomic(), || {
                    format!("{p} seed {seed}: forged read {victim} not flagged")
                })?;
            }
            compared += 1;
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "{runs} seeded runs atomic; checker agrees with oracle on {compared} histories; {:.1?}",
        start.elapsed()
    ))
}

fn servers_crashed(trace: &Trace) -> usize {
    trace
        .events
        .iter()
        .filter(|e| matches!(e, Event::Crash { node, .. } if node.server().is_some()))
        .count()
}

fn liveness() -> Outcome {
    let mut runs = 0;
    for p in ["cas", "abd", "ccoas"] {
        for t in [format!("sweep/{p}_random.json"), format!("sweep/{p}_crashes.json")] {
            let cfg = load(&t);
            for seed in 0..1000 {
                let mut c = cfg.clone();
                c.scheduler.seed = seed;
                let (trace, r) = simulate(&c).map_err(|e| e.to_string())?;
                ensure(trace.is_fair() && servers_crashed(&trace) <= trace.header.f, || {
                    format!("{t} seed {seed} is outside the regime")
                })?;
                ensure(r.liveness == Liveness::Live, || format!("{t} seed {seed}: {:?}", r.liveness))?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} fair runs with <= f server crashes, 0 stalls"))
}

/// The starvation script with `delta + 1` writes overlapping the read.
fn starvation(delta: usize) -> ScenarioConfig {
    let mut cfg = load("casgc_starvation.json");
    cfg.id = format!("casgc_starvation_d{delta}");
    cfg.delta = Some(delta);
    let read = cfg.ops[0].clone();
    let mut ops = vec![read];
    for i in 0..=delta {
        ops.push(OpSpec {
            client: "w".into(),
            kind: OpKind::Write,
            value: Some(format!("w{i}")),
            at: 0,
            after: Some(if i == 0 {
                cfg.ops[1].after.clone().expect("bundled trigger")
            } else {
                Trigger::Responded(i)
            }),
        });
    }
    cfg.ops = ops;
    cfg.expect = None;
    cfg
}

fn casgc_boundary() -> Outcome {
    for delta in 0..=2 {
        let t = format!("sweep/casgc_delta{delta}.json");
        for r in sweep_reports(&load(&t), 0..500).map_err(|e| e.to_string())? {
            ensure(r.liveness == Liveness::Live, || format!("{t} seed {}: {:?}", r.seed, r.liveness))?;
        }
    }
    let (bundled_trace, bundled_report) = run("casgc_starvation.json");
    ensure(bundled_report.passed, || format!("bundled script: {:?}", bundled_report.failures()))?;
    let mut cases = vec![(1, bundled_trace)];
    for delta in [0, 2] {
        cases.push((delta, simulate(&starvation(delta)).map_err(|e| e.to_string())?.0));
    }
    for (delta, trace) in &cases {
        ensure(trace.header.step_budget >= 1_000_000, || "budget below 10^6".into())?;
        let h = History::from_trace(trace);
        ensure(h.ops[0].stalled(), || format!("delta={delta}: read terminated"))?;
        let conc = concurrency_profile(trace, &h);
        let c = conc.iter().find(|c| c.read == 0).map_or(0, |c| c.count());
        ensure(c > *delta, || format!("delta={delta}: only {c} concurrent writes"))?;
        let (reason, _) = trace.halt().expect("halt event");
        ensure(reason == HaltReason::Quiescent, || format!("delta={delta}: halted {reason:?}"))?;
    }
    Ok("1500 runs with concurrency <= delta all terminate; starvation scripts (delta 0,1,2) stall with delta+1 concurrent writes".into())
}

fn casgc_storage() -> Outcome {
    let mut runs = 0;
    for t in [
        "sweep/casgc_random.json",
        "sweep/casgc_crashes.json",
        "sweep/casgc_delta0.json",
        "sweep/casgc_delta1.json",
        "sweep/casgc_delta2.json",
    ] {
        for r in sweep_reports(&load(t), 0..500).map_err(|e| e.to_string())? {
            let s = r.supersession.as_ref().ok_or("no supersession profile")?;
            ensure(s.quiescent_bound_violations() == 0 && s.bound_violations.is_empty(), || {
                format!("{t} seed {}: {:?}", r.seed, s.bound_violations.first())
            })?;
            ensure(s.gc_violations.is_empty(), || format!("{t} seed {}: {:?}", r.seed, s.gc_violations.first()))?;
            let bound = Ratio::new((s.w_max * r.n) as u64, r.k as u64);
            ensure(r.ledger.storage_sup <= bound, || format!("{t} seed {}: storage above w*N/k", r.seed))?;
            runs += 1;
        }
    }
    let (trace, r) = run("casgc_storage.json");
    ensure(r.passed, || format!("storage script: {:?}", r.failures()))?;
    let oldest = History::from_trace(&trace).ops[0].tag.clone().ok_or("first write has no tag")?;
    let mut held: BTreeMap<usize, Cost> = BTreeMap::new();
    for e in &trace.events {
        if let Event::State { server, tag, stored, .. } = e {
            if *tag == oldest {
                held.insert(*server, *stored);
            }
        }
    }
    ensure(held.values().all(|c| *c == units(0)), || format!("oldest write still stored: {held:?}"))?;
    Ok(format!("{runs} runs within w*N/k at every point; oldest of delta+2 writes collected everywhere"))
}

fn ccoas_drawback() -> Outcome {
    let (_, stalled) = run("ccoas_drawback.json");
    let (_, control) = run("cas_drawback_control.json");
    ensure(stalled.passed && stalled.liveness.stalled() == [1], || {
        format!("ccoas: {:?} {:?}", stalled.liveness, stalled.failures())
    })?;
    ensure(control.passed && control.liveness.stalled().is_empty(), || {
        format!("cas control: {:?} {:?}", control.liveness, control.failures())
    })?;
    Ok("CCOAS read stalls with the pre-write suppressed; CAS(n-2f) on the same script returns".into())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for path in bundled() {
        let id = harness::load_config(&path).map_err(|e| e.to_string())?.id;
        harness::run_scenario(&path, a.path(), None).map_err(|e| e.to_string())?;
        harness::run_scenario(&path, b.path(), None).map_err(|e| e.to_string())?;
        for name in [harness::trace_file_name(&id), harness::report_file_name(&id)] {
            let x = std::fs::read(a.path().join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(&name)).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("{name} differs between runs"))?;
            files += 1;
        }
    }
    Ok(format!("{files} trace and report files byte-identical across re-runs"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("MDS round-trip", mds_round_trip),
        ("quorum properties", quorum_properties),
        ("CAS costs", cas_costs),
        ("ABD costs", abd_costs),
        ("LDR costs", ldr_costs),
        ("CCOAS costs", ccoas_costs),
        ("atomicity", atomicity),
        ("CAS/ABD/CCOAS liveness", liveness),
        ("CASGC liveness boundary", casgc_boundary),
        ("CASGC storage", casgc_storage),
        ("CCOAS drawback", ccoas_drawback),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
