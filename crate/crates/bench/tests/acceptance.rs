//! The acceptance suite: every criterion at its stated tolerance, one
//! PASS/FAIL line each. Run with `--nocapture` to see the lines.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mergeidx::workload::{generate, sample, DeltaGen};
use mergeidx::{
    Backend, Database, Delta, IncludedColumns, JoinType, OrderedStore, Record, Scope, ShadowDb,
    Structure, StructureKind, WorkloadConfig,
};
use mergeidx_bench::{
    build, run_experiment, run_experiment_on, run_grid, verify, write_csv, BufferSize,
    ExperimentConfig, GridSpec, Phase, DEFAULT_GRID_ROWS,
};

/// `Ok` carries the measured evidence, `Err` the first violation.
type Outcome = Result<String, String>;

type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(structure: StructureKind, phase: Phase) -> ExperimentConfig {
    ExperimentConfig::new(structure, phase)
}

fn loaded(cfg: &ExperimentConfig, db: &Database) -> Structure {
    build(cfg, db).expect("build").0
}

fn c1_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let check = verify::oracle_equivalence(100);
    let elapsed = started.elapsed();
    if let Some(f) = check.failure {
        return Err(f);
    }
    ensure(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "100 seeds, {} join comparisons, {:.1}s",
        check.cases,
        elapsed.as_secs_f64()
    ))
}

fn c2_golden() -> Outcome {
    let check = verify::golden();
    match check.failure {
        None => Ok(format!("{} comparisons", check.cases)),
        Some(f) => Err(f),
    }
}

fn c3_point_traversals() -> Outcome {
    let mut seen = Vec::new();
    for jt in [JoinType::Inner, JoinType::FullOuter] {
        for (kind, want) in [(StructureKind::Merged, 1), (StructureKind::Traditional, 2)] {
            let cfg = ExperimentConfig {
                jt,
                ops: 1_000,
                ..config(kind, Phase::Point)
            };
            let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
            ensure(r.counters.root_to_leaf_traversals == want * r.ops, || {
                format!(
                    "{kind} {jt}: {} traversals over {} lookups",
                    r.counters.root_to_leaf_traversals, r.ops
                )
            })?;
            seen.push(format!("{kind}/{jt}={}", r.traversals_per_op()));
        }
    }
    Ok(seen.join(" "))
}

fn stock_with_matches(k: usize) -> Database {
    let mut db = sample::four_rows();
    db.stock.truncate(1);
    db.orderlines = (0..k)
        .map(|n| {
            let mut o = sample::four_rows().orderlines[0].clone();
            o.order_id = n as u32 + 1;
            o
        })
        .collect();
    db
}

fn c4_maintenance() -> Outcome {
    // merged index: one mutation and no probes per delta
    let wl = WorkloadConfig {
        warehouses: 2,
        items_per_warehouse: 100,
        orderlines_per_warehouse: 1_000,
        so: 0.5,
        ..WorkloadConfig::default()
    };
    let db = generate(&wl);
    let mut shadow = ShadowDb::from_database(&db);
    let mut merged = loaded(&config(StructureKind::Merged, Phase::Update), &db);
    let mut gen = DeltaGen::new(&wl, 3);
    let mut key_changes = 0;
    for _ in 0..1_000 {
        let d = gen.next_delta(&shadow);
        shadow.apply(&d).map_err(|e| e.to_string())?;
        merged.reset_counters();
        merged.apply(&d).map_err(|e| e.to_string())?;
        let c = merged.counters();
        // a key change is a delete plus an insert
        let want = if d.changes_key() { 2 } else { 1 };
        key_changes += usize::from(d.changes_key());
        ensure(c.mutations == want && c.searches == 0, || {
            format!(
                "merged: {} mutations, {} probes for {d:?}",
                c.mutations, c.searches
            )
        })?;
    }

    // materialized view: k view mutations plus a support probe
    for k in [0usize, 1, 3] {
        let db = stock_with_matches(k);
        let cfg = ExperimentConfig {
            view_join: Some(JoinType::Inner),
            ..config(StructureKind::Matview, Phase::Update)
        };
        let old = db.stock[0].clone();
        let mut new = old.clone();
        new.columns.as_mut().unwrap().quantity -= 1;
        let cases = [
            (
                "update",
                db.clone(),
                Delta::Update {
                    old: Record::Stock(old.clone()),
                    new: Record::Stock(new),
                },
            ),
            (
                "insert",
                Database {
                    stock: vec![],
                    ..db.clone()
                },
                Delta::Insert(Record::Stock(old)),
            ),
        ];
        for (what, base, delta) in cases {
            let mut mv = loaded(&cfg, &base);
            mv.reset_counters();
            mv.apply(&delta).map_err(|e| e.to_string())?;
            let stores = mv.stores();
            let (view, probes) = (
                stores[0].counters().mutations,
                stores[2].counters().searches,
            );
            ensure(view == k as u64 && probes >= 1, || {
                format!(
                    "matview stock {what} k={k}: {view} view mutations, {probes} support probes"
                )
            })?;
        }
    }

    // default update workload
    let per_update = |kind| -> Result<f64, String> {
        let cfg = ExperimentConfig {
            ops: 200,
            ..config(kind, Phase::Update)
        };
        Ok(run_experiment(&cfg)
            .map_err(|e| e.to_string())?
            .node_accesses_per_op())
    };
    let m = per_update(StructureKind::Merged)?;
    let t = per_update(StructureKind::Traditional)?;
    let ratio = m / t;
    let summary = format!(
        "1000 merged deltas exact ({key_changes} key changes as delete+insert); matview k in {{0,1,3}} exact; \
         accesses/update merged {m:.3} traditional {t:.3} ratio {ratio:.3} (limit 1.1)"
    );
    ensure(ratio <= 1.1, || summary.clone())?;
    Ok(summary)
}

fn c5_space() -> Outcome {
    for backend in Backend::ALL {
        for policy in IncludedColumns::ALL {
            for so in [0.05, 1.0] {
                let base = ExperimentConfig {
                    backend,
                    policy,
                    so,
                    ..config(StructureKind::Merged, Phase::Load)
                };
                let db = generate(&base.effective_workload());
                let m = run_experiment_on(&base, &db).map_err(|e| e.to_string())?;
                let t = run_experiment_on(
                    &ExperimentConfig {
                        structure: StructureKind::Traditional,
                        ..base
                    },
                    &db,
                )
                .map_err(|e| e.to_string())?;
                let (mp, tp) = (m.primary_space, t.primary_space);
                ensure(
                    mp.payload_bytes == tp.payload_bytes + mp.entry_count,
                    || {
                        format!(
                            "{backend}/{policy}/so={so}: merged {} vs traditional {} + {}",
                            mp.payload_bytes, tp.payload_bytes, mp.entry_count
                        )
                    },
                )?;
            }
        }
    }
    let mut details = Vec::new();
    for backend in Backend::ALL {
        let base = ExperimentConfig {
            backend,
            policy: IncludedColumns::All,
            so: 1.0,
            ..config(StructureKind::Merged, Phase::Load)
        };
        let db = generate(&base.effective_workload());
        let groups = db.group_sizes();
        let matched: Vec<usize> = groups
            .values()
            .filter(|g| g.0 > 0 && g.1 > 0)
            .map(|g| g.1)
            .collect();
        let fan_out = matched.iter().sum::<usize>() as f64 / matched.len().max(1) as f64;
        ensure(fan_out >= 2.0, || format!("average fan-out {fan_out}"))?;
        let m = run_experiment_on(&base, &db).map_err(|e| e.to_string())?;
        let v = run_experiment_on(
            &ExperimentConfig {
                structure: StructureKind::Matview,
                ..base
            },
            &db,
        )
        .map_err(|e| e.to_string())?;
        let (ma, va, net) = (
            m.primary_space.allocated_bytes,
            v.primary_space.allocated_bytes,
            v.support_space.allocated_bytes,
        );
        ensure(ma < va && net > 0, || {
            format!("{backend}: merged {ma} matview {va} net addition {net}")
        })?;
        details.push(format!(
            "{backend}: merged {ma} < matview {va}, net addition {net}"
        ));
    }
    Ok(format!(
        "payload identity exact on 24 builds; fan-out >= 2; {}",
        details.join("; ")
    ))
}

fn c6_compression() -> Outcome {
    for seed in 0..10 {
        let wl = WorkloadConfig {
            warehouses: 2,
            items_per_warehouse: 300,
            orderlines_per_warehouse: 3_000,
            so: [0.05, 0.19, 0.5, 1.0][seed as usize % 4],
            seed,
            ..WorkloadConfig::default()
        };
        let db = generate(&wl);
        let expected_view: usize = db.group_sizes().values().map(|(r, s)| r * s).sum();
        let cfg = ExperimentConfig {
            so: wl.so,
            workload: wl,
            ..config(StructureKind::Merged, Phase::Load)
        };
        let merged = loaded(&cfg, &db);
        let view = loaded(
            &ExperimentConfig {
                structure: StructureKind::Matview,
                view_join: Some(JoinType::Inner),
                ..cfg
            },
            &db,
        );
        let (me, ve) = (
            merged.primary_space().entry_count,
            view.primary_space().entry_count,
        );
        ensure(me as usize == db.stock.len() + db.orderlines.len(), || {
            format!("seed {seed}: merged holds {me} entries")
        })?;
        ensure(ve as usize == expected_view, || {
            format!("seed {seed}: view holds {ve}, expected {expected_view}")
        })?;
    }
    Ok("10 seeds exact".into())
}

fn scan_all(s: &Structure) -> Vec<Vec<(Vec<u8>, Vec<u8>)>> {
    s.stores()
        .iter()
        .map(|st| st.scan_all().collect())
        .collect()
}

fn c7_lsm_load() -> Outcome {
    let mut details = Vec::new();
    for policy in IncludedColumns::ALL {
        let base = ExperimentConfig {
            backend: Backend::Lsm,
            policy,
            ..config(StructureKind::Merged, Phase::Load)
        };
        // generation order is not key order
        let db = generate(&base.effective_workload());
        let (mut merged, mw) = build(&base, &db).map_err(|e| e.to_string())?;
        let trad_cfg = ExperimentConfig {
            structure: StructureKind::Traditional,
            ..base
        };
        let (mut trad, tw) = build(&trad_cfg, &db).map_err(|e| e.to_string())?;
        let ratio = mw.node_writes as f64 / tw.node_writes as f64;
        ensure(ratio <= 1.15, || {
            format!(
                "{policy}: merged {} writes, twin indexes {}",
                mw.node_writes, tw.node_writes
            )
        })?;
        merged.compact().map_err(|e| e.to_string())?;
        trad.compact().map_err(|e| e.to_string())?;
        for (lsm, cfg) in [(&merged, base), (&trad, trad_cfg)] {
            let btree = loaded(
                &ExperimentConfig {
                    backend: Backend::BTree,
                    ..cfg
                },
                &db,
            );
            ensure(scan_all(lsm) == scan_all(&btree), || {
                format!("{policy} {}: compacted scan differs", cfg.structure)
            })?;
        }
        details.push(format!("{policy} {ratio:.4}"));
    }
    Ok(format!(
        "write ratio {} (limit 1.15); compacted scans equal b-tree",
        details.join(", ")
    ))
}

fn c8_memory_regimes() -> Outcome {
    let mut details = Vec::new();
    for backend in Backend::ALL {
        for kind in StructureKind::ALL {
            let misses = |buffer| -> Result<f64, String> {
                let cfg = ExperimentConfig {
                    backend,
                    buffer,
                    ops: 10,
                    ..config(kind, Phase::Scan)
                };
                Ok(run_experiment(&cfg)
                    .map_err(|e| e.to_string())?
                    .misses_per_op())
            };
            let (small, large) = (misses(BufferSize::Small)?, misses(BufferSize::Large)?);
            ensure(small > large && large == 0.0, || {
                format!("{backend}/{kind}: small {small} large {large}")
            })?;
            details.push(format!("{backend}/{kind} {small:.1}>{large}"));
        }
    }
    Ok(format!("misses/scan {}", details.join(" ")))
}

fn c9_read_share() -> Outcome {
    let mut shares = Vec::new();
    let mut low = Vec::new();
    for kind in StructureKind::ALL {
        let cfg = ExperimentConfig {
            ops: 200,
            ..config(kind, Phase::Update)
        };
        let share = run_experiment(&cfg)
            .map_err(|e| e.to_string())?
            .read_share();
        shares.push(format!("{kind} {share:.4}"));
        if share < 0.8 {
            low.push(kind);
        }
    }
    let summary = format!("read share {} (limit 0.8)", shares.join(", "));
    ensure(low.is_empty(), || summary.clone())?;
    Ok(summary)
}

fn c10_non_blocking() -> Outcome {
    let mut details = Vec::new();
    for scale in [1u32, 10] {
        let wl = WorkloadConfig {
            items_per_warehouse: 200 * scale,
            orderlines_per_warehouse: 2_000 * scale,
            so: 0.5,
            ..WorkloadConfig::default()
        };
        let db = generate(&wl);
        let largest = db.group_sizes().values().map(|g| g.0).max().unwrap_or(0);
        for kind in [StructureKind::Merged, StructureKind::Traditional] {
            let s = loaded(
                &ExperimentConfig {
                    so: wl.so,
                    workload: wl,
                    ..config(kind, Phase::Scan)
                },
                &db,
            );
            for jt in JoinType::ALL {
                let stream = s.join(jt, Scope::All).map_err(|e| e.to_string())?;
                let peak = stream.peak_handle();
                stream.count();
                ensure(peak.get() == largest, || {
                    format!(
                        "{kind} {jt} at {} rows: peak {} vs largest group {largest}",
                        db.len(),
                        peak.get()
                    )
                })?;
            }
        }
        details.push(format!("{} rows: peak {largest}", db.len()));
    }
    Ok(format!("all join types, {}", details.join("; ")))
}

fn c11_grid() -> Outcome {
    let started = Instant::now();
    let spec = GridSpec::default();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let reports = run_grid(&spec, |_, _| {}).map_err(|e| e.to_string())?;
        ensure(reports.len() == DEFAULT_GRID_ROWS, || {
            format!("{} rows", reports.len())
        })?;
        let mut csv = Vec::new();
        write_csv(&reports, &mut csv).map_err(|e| e.to_string())?;
        outputs.push(csv);
    }
    let failed: Vec<_> = verify::run_all(100)
        .into_iter()
        .filter(|c| !c.passed())
        .collect();
    let elapsed = started.elapsed();
    ensure(failed.is_empty(), || format!("verify failed: {failed:?}"))?;
    ensure(outputs[0] == outputs[1], || {
        "CSV differs between runs".into()
    })?;
    ensure(elapsed < Duration::from_secs(600), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{DEFAULT_GRID_ROWS} rows twice, {} CSV bytes identical, verify passed, {:.0}s total",
        outputs[0].len(),
        elapsed.as_secs_f64()
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 11] = [
        (1, "oracle equivalence", c1_oracle_equivalence),
        (2, "golden example", c2_golden),
        (3, "point-lookup traversals", c3_point_traversals),
        (4, "maintenance counts", c4_maintenance),
        (5, "space identities", c5_space),
        (6, "compression identity", c6_compression),
        (7, "LSM bulk load", c7_lsm_load),
        (8, "memory regimes", c8_memory_regimes),
        (9, "read dominance", c9_read_share),
        (10, "non-blocking joins", c10_non_blocking),
        (11, "default grid and verify", c11_grid),
    ];
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match &outcome {
            Ok(detail) => println!("criterion {n:>2} PASS {name}: {detail}"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL {name}: {detail}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
