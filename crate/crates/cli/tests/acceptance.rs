//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines are always printed; exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wban_cli::{cmd_opcount, cmd_randomness, cmd_simulate, OpcountFormat, RunConfig, Scheme};
use wban_core::bits::BitString;
use wban_core::framing::{deserialize_ack, deserialize_iamkeys, deserialize_kemesis};
use wban_core::iamkeys::encrypt_block;
use wban_core::kemesis::kemesis_encrypt;
use wban_core::opcount::{
    iamkeys_decrypt_breakdown, iamkeys_encrypt_breakdown, instrumented_iamkeys_decrypt, instrumented_iamkeys_encrypt,
    instrumented_kemesis_decrypt, instrumented_kemesis_encrypt, kemesis_decrypt_breakdown, kemesis_encrypt_breakdown,
    CostParams,
};
use wban_core::rng::{default_taps, derive_keypair, keystream, LfsrState};
use wban_core::simnet::{
    run_scenario, AdversaryAction, EventKind, NodeId, PacketKind, ScenarioConfig, ScriptAction, SimReport, Simulation,
};
use wban_core::FrameConfig;

/// Upper quantile 0.999 of chi-square with 15 degrees of freedom.
const CHI2_DF15_Q999: f64 = 37.6973;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(text: &str) -> Result<ScenarioConfig, String> {
    ScenarioConfig::parse(text).map_err(|e| e.to_string())
}

fn run(text: &str) -> Result<SimReport, String> {
    run_scenario(&scenario(text)?).map_err(|e| e.to_string())
}

fn opcount_reproduction() -> Outcome {
    let csv = cmd_opcount(OpcountFormat::Csv);
    let rows: Vec<(String, u64, u64, u64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[3].parse().unwrap(),
                f[5].parse().unwrap(),
                f[6].parse().unwrap(),
            )
        })
        .collect();
    let got: Vec<(u64, u64)> = rows.iter().map(|r| (r.2, r.3)).collect();
    let want = [(240, 197), (242, 199), (244, 201), (93, 51), (94, 52)];
    ensure(got == want, || format!("rows {got:?}"))?;
    Ok("(240,197) (242,199) (244,201) (93,51) (94,52)".into())
}

fn instrumentation_agreement() -> Outcome {
    let mut cases = 0;
    for alpha in 0..=3 {
        for beta in 1..=5 {
            for gamma in 0..=1 {
                let p = CostParams::iamkeys(alpha, beta, gamma).map_err(|e| e.to_string())?;
                let enc = instrumented_iamkeys_encrypt(p).map_err(|e| e.to_string())?;
                let dec = instrumented_iamkeys_decrypt(p).map_err(|e| e.to_string())?;
                ensure(enc == iamkeys_encrypt_breakdown(p, 1), || {
                    format!("iamkeys enc {p:?}: {enc:?}")
                })?;
                ensure(dec == iamkeys_decrypt_breakdown(p, 1), || {
                    format!("iamkeys dec {p:?}: {dec:?}")
                })?;
                cases += 1;
            }
        }
    }
    for gamma in 0..=1 {
        let p = CostParams::kemesis(1, gamma).map_err(|e| e.to_string())?;
        let enc = instrumented_kemesis_encrypt(p).map_err(|e| e.to_string())?;
        let dec = instrumented_kemesis_decrypt(p).map_err(|e| e.to_string())?;
        ensure(enc == kemesis_encrypt_breakdown(p), || {
            format!("kemesis enc {p:?}: {enc:?}")
        })?;
        ensure(dec == kemesis_decrypt_breakdown(p), || {
            format!("kemesis dec {p:?}: {dec:?}")
        })?;
        cases += 1;
    }
    Ok(format!("{cases} parameter sets agree per category"))
}

fn cipher_involution() -> Outcome {
    let mut failures = 0u64;
    let seeds = [
        0x01u8, 0x10, 0x22, 0x3E, 0x47, 0x5A, 0x6B, 0x7F, 0x80, 0x93, 0xA5, 0xB8, 0xC3, 0xD4, 0xE9, 0xFF,
    ];
    let pairs: BTreeSet<String> = seeds
        .iter()
        .map(|&s| derive_keypair(s, 16).unwrap().k1().to_hex())
        .collect();
    ensure(pairs.len() == 16, || "key pairs not distinct".into())?;
    for &seed in &seeds {
        let keys = derive_keypair(seed, 16).map_err(|e| e.to_string())?;
        for pt in 0..=u16::MAX {
            let d = BitString::from_uint(u64::from(pt), 16);
            let twice = encrypt_block(&encrypt_block(&d, &keys).unwrap(), &keys).unwrap();
            failures += u64::from(twice != d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let d = BitString::from_uint(u64::from(rng.random::<u16>()), 16);
        let k = BitString::from_uint(u64::from(rng.random::<u16>()), 16);
        failures += u64::from(kemesis_encrypt(&kemesis_encrypt(&d, &k).unwrap(), &k).unwrap() != d);
    }
    ensure(failures == 0, || format!("{failures} failures"))?;
    Ok("16 x 65536 IAMKeys blocks, 10000 KEMESIS pairs, 0 failures".into())
}

fn independent_keys() -> Outcome {
    let r = run("frames = 1000\nseed = 4")?;
    let accepts: Vec<_> = r.trace.of_kind(EventKind::Accept).collect();
    let iamkeys = accepts.iter().filter(|e| e.field("scheme") == Some("iamkeys")).count();
    let kemesis = accepts.len() - iamkeys;
    ensure(iamkeys == 1000 && kemesis > 0, || {
        format!("accepts {iamkeys}/{kemesis}")
    })?;
    // Sensors log applied control frames as commits; both carry the key check.
    let checked: Vec<_> = r.trace.events().iter().filter(|e| e.field("match").is_some()).collect();
    let bad = checked.iter().filter(|e| e.field("match") != Some("yes")).count();
    ensure(bad == 0 && r.summary.key_mismatches == 0, || {
        format!("{bad} key mismatches")
    })?;
    ensure(r.summary.key_checks == checked.len() as u64, || {
        "unchecked accepts".into()
    })?;

    // Every transmission decodes as a data, control or ACK frame.
    let analysis = FrameConfig::analysis();
    for c in &r.captures {
        let ok = match c.kind {
            PacketKind::Iamkeys => deserialize_iamkeys(&c.bits, &analysis).is_ok(),
            PacketKind::Kemesis => deserialize_kemesis(&c.bits, &analysis).is_ok(),
            PacketKind::Ack => deserialize_ack(&c.bits).is_ok(),
        };
        ensure(ok, || format!("capture {} is not a protocol frame", c.index))?;
    }
    let tx = r.trace.of_kind(EventKind::Tx).count();
    ensure(tx == r.captures.len(), || "untracked transmissions".into())?;
    ensure(
        r.trace
            .of_kind(EventKind::Tx)
            .all(|e| matches!(e.field("kind"), Some("iamkeys" | "kemesis" | "ack"))),
        || "unexpected message kind".into(),
    )?;
    Ok(format!(
        "{} receptions keyed identically, {tx} transmissions, 0 key-exchange",
        checked.len()
    ))
}

fn replay_resistance() -> Outcome {
    let text = "frames = 120\nrefresh_period = 1\nseed = 21";
    let base = run(text)?;
    let pick = |kind: PacketKind, from_wcc: bool, n: usize| {
        base.captures
            .iter()
            .filter(move |c| c.kind == kind && (c.src == NodeId::Wcc) == from_wcc)
            .take(n)
            .map(|c| ScriptAction {
                slot: c.slot + 3 + (c.index as u64 % 4),
                action: AdversaryAction::Replay(c.index),
            })
    };
    let mut cfg = scenario(text)?;
    cfg.script.extend(pick(PacketKind::Iamkeys, true, 40));
    cfg.script.extend(pick(PacketKind::Kemesis, false, 30));
    // Control frames, replayed after the refresh they carried committed.
    cfg.script.extend(pick(PacketKind::Kemesis, true, 30));
    ensure(cfg.script.len() == 100, || format!("corpus of {}", cfg.script.len()))?;
    let r = run_scenario(&cfg).map_err(|e| e.to_string())?;
    ensure(r.summary.injections == 100, || {
        format!("{} injected", r.summary.injections)
    })?;
    ensure(r.summary.injected_accepted == 0, || {
        format!("{} replays accepted", r.summary.injected_accepted)
    })?;
    Ok(format!("100 replays, 0 accepted, rejects {:?}", r.summary.rejects))
}

fn iamkeys_emits(r: &SimReport) -> Vec<u32> {
    r.trace
        .of_kind(EventKind::Emit)
        .filter(|e| e.field("scheme") == Some("iamkeys"))
        .map(|e| e.field("seq").unwrap().parse().unwrap())
        .collect()
}

fn freshness_and_alarms() -> Outcome {
    let r = run("frames = 12\ndrop_data = 4,5")?;
    ensure(iamkeys_emits(&r) == (1..=12).collect::<Vec<_>>(), || {
        "retransmission".into()
    })?;
    let f6 = r
        .monitor_frames
        .iter()
        .find(|f| f.seq_no == 6)
        .ok_or("frame 6 missing")?;
    ensure(f6.timestamp == 5 && r.wcc_frames.iter().any(|f| f == f6), || {
        format!("frame 6 {f6:?}")
    })?;

    let r = run("frames = 20\ndrop_ack = 1-10")?;
    let alarms: Vec<_> = r.trace.of_kind(EventKind::Alarm).filter(|e| e.actor == "WCC").collect();
    ensure(
        alarms.len() == 1 && alarms[0].field("seq") == Some("10") && iamkeys_emits(&r).len() == 10,
        || format!("sender alarms {alarms:?}"),
    )?;

    let r = run("frames = 30\ndrop_data = 5-14")?;
    let alarm = r
        .trace
        .of_kind(EventKind::Alarm)
        .find(|e| e.actor == "MON")
        .ok_or("no receiver alarm")?;
    ensure(alarm.slot == 14, || format!("receiver alarm at slot {}", alarm.slot))?;
    Ok("no resend of 4-5, frame 6 fresh; sender alarm at seq 10; receiver alarm at slot 14".into())
}

fn synchronization() -> Outcome {
    let mut sim = Simulation::new(scenario("frames = 300\nseed = 5")?).map_err(|e| e.to_string())?;
    let mut lagged = 0;
    while !sim.is_finished() {
        sim.step();
        let sender = sim.sender().ref_list().clone();
        let mut receiver = sim.monitor().ref_list().clone();
        if sender != receiver {
            let pending = sim
                .monitor()
                .pending_update()
                .cloned()
                .ok_or("divergence without pending frame")?;
            receiver.replace_oldest(pending);
            ensure(sender == receiver, || format!("lists diverge at slot {}", sim.slot()))?;
            lagged += 1;
        }
    }
    let r = run("frames = 400\nrefresh_period = 1\nseed = 9")?;
    ensure(r.summary.refreshes_committed >= 100, || {
        format!("{} refreshes", r.summary.refreshes_committed)
    })?;
    let cells: usize = r.table_diffs.iter().map(Vec::len).sum();
    ensure(cells == 0, || format!("{cells} divergent cells"))?;
    Ok(format!(
        "lists equal modulo pending frame ({lagged} lagged slots); {} refreshes, 0 divergent cells",
        r.summary.refreshes_committed
    ))
}

fn randomness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let short = cmd_randomness(&RunConfig {
        frames: Some(100),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(short.rows_for(Scheme::Iamkeys).count() == 100, || "row count".into())?;
    ensure(short.iamkeys_index_counts.iter().all(|&n| n > 0), || {
        format!("ref {:?}", short.iamkeys_index_counts)
    })?;
    ensure(short.iamkeys_field_counts.iter().all(|&n| n > 0), || {
        format!("field {:?}", short.iamkeys_field_counts)
    })?;

    let long = cmd_randomness(&RunConfig {
        frames: Some(1000),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(
        long.kemesis_frame_counts.len() == 16 && long.kemesis_frame_counts.iter().all(|&n| n > 0),
        || format!("frame_no {:?}", long.kemesis_frame_counts),
    )?;
    ensure(
        long.kemesis_field_counts.len() == 8 && long.kemesis_field_counts.iter().all(|&n| n > 0),
        || format!("field_no {:?}", long.kemesis_field_counts),
    )?;
    let chi = long.chi_squares()[2].1.ok_or("no chi-square")?;
    ensure(chi.df == 15 && chi.statistic < CHI2_DF15_Q999, || {
        format!("chi-square {chi:?}")
    })?;
    Ok(format!(
        "full coverage; frame_no chi-square {:.2} < {CHI2_DF15_Q999} (df 15)",
        chi.statistic
    ))
}

fn lfsr_structure() -> Outcome {
    for (width, period) in [(8u8, 255u64), (4, 15)] {
        let taps = default_taps(width).ok_or("no taps")?;
        for seed in 1..(1u32 << width) {
            let reg = LfsrState::new(width, taps, seed).map_err(|e| e.to_string())?;
            ensure(reg.period() == period, || {
                format!("width {width} seed {seed} period {}", reg.period())
            })?;
        }
    }
    let streams: BTreeSet<String> = (1..=255u8).map(|s| keystream(s, 16).to_hex()).collect();
    ensure(streams.len() == 255, || {
        format!("{} distinct keystreams", streams.len())
    })?;
    Ok("periods 255 and 15 from every seed; 255 distinct 16-bit keystreams".into())
}

fn determinism() -> Outcome {
    let script = tempfile::NamedTempFile::new().map_err(|e| e.to_string())?;
    std::fs::write(
        script.path(),
        "frames = 300\nloss = 0.1\nseed = 2024\nat 40: replay 7\nat 90: flip 30 3\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        cmd_simulate(&RunConfig {
            script: Some(script.path().to_path_buf()),
            out: dir.path().to_path_buf(),
            ..RunConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let read = |n: &str| std::fs::read(dir.path().join(n)).map_err(|e| e.to_string());
        outputs.push((read("trace.log")?, read("trace.csv")?));
    }
    ensure(outputs[0] == outputs[1], || "trace files differ".into())?;
    Ok(format!(
        "trace.log {} bytes, trace.csv {} bytes identical",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("op-count reproduction", Duration::from_secs(1), opcount_reproduction),
        (
            "instrumentation agreement",
            Duration::from_secs(1),
            instrumentation_agreement,
        ),
        ("cipher involution", Duration::from_secs(10), cipher_involution),
        ("independent key generation", Duration::from_secs(10), independent_keys),
        ("replay resistance", Duration::from_secs(10), replay_resistance),
        ("freshness and alarms", Duration::from_secs(5), freshness_and_alarms),
        (
            "reference/table synchronization",
            Duration::from_secs(10),
            synchronization,
        ),
        ("randomness", Duration::from_secs(10), randomness),
        ("LFSR structure", Duration::from_secs(1), lfsr_structure),
        ("determinism", Duration::from_secs(10), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (verdict, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget")),
            Err(e) => ("FAIL", e),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {verdict} {name}: {detail} [{:.3}s / {}s]",
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
