//! Builds a structure, warms it and measures one phase.

use std::time::Instant;

use mergeidx::workload::{generate, query_stream, NewOrderGen, QueryKind};
use mergeidx::{BufferPool, Database, Delta, MetricsCounters, Record, StoreConfig, Structure};

use crate::config::{ExperimentConfig, Phase};
use crate::error::Result;
use crate::report::MetricsReport;

/// Seed offsets so queries and transactions do not replay the data stream.
const QUERY_SEED_OFFSET: u64 = 1;
const TXN_SEED_OFFSET: u64 = 2;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let db = generate(&cfg.effective_workload());
    run_experiment_on(cfg, &db)
}

/// Runs `cfg` against an already generated database, which must come from
/// `cfg.effective_workload()` up to the included-columns policy.
pub fn run_experiment_on(cfg: &ExperimentConfig, db: &Database) -> Result<MetricsReport> {
    cfg.validate()?;
    let started = Instant::now();
    let (mut structure, load) = build(cfg, db)?;
    if cfg.phase == Phase::Load {
        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        return Ok(report(
            cfg,
            &structure,
            load,
            db.len() as u64,
            0,
            0,
            elapsed_ms,
        ));
    }

    structure.compact()?;
    structure.warm();
    structure.reset_counters();

    let workload = cfg.effective_workload();
    let started = Instant::now();
    let mut ops = 0u64;
    let mut rows_out = 0u64;
    let mut peak = 0usize;
    match cfg.phase {
        Phase::Load => unreachable!(),
        Phase::Point | Phase::Scan => {
            let kind = if cfg.phase == Phase::Point {
                QueryKind::Point
            } else {
                QueryKind::Scan
            };
            let seed = workload.seed.wrapping_add(QUERY_SEED_OFFSET);
            for scope in query_stream(&workload, kind, seed).take(cfg.ops) {
                let stream = structure.join(cfg.jt, scope)?;
                let handle = stream.peak_handle();
                for row in stream {
                    row?;
                    rows_out += 1;
                }
                peak = peak.max(handle.get());
                ops += 1;
            }
        }
        Phase::Update => {
            let seed = workload.seed.wrapping_add(TXN_SEED_OFFSET);
            let mut txns = NewOrderGen::new(&workload, db, seed);
            for _ in 0..cfg.ops {
                for delta in txns.next_txn().deltas() {
                    // the transaction reads the stock row before changing it
                    if let Delta::Update {
                        old: Record::Stock(s),
                        ..
                    } = &delta
                    {
                        structure.read_stock(s.key())?;
                    }
                    structure.apply(&delta)?;
                    ops += 1;
                }
            }
        }
    }
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report(
        cfg,
        &structure,
        structure.counters(),
        ops,
        rows_out,
        peak,
        elapsed_ms,
    ))
}

/// A freshly loaded structure and the counters of its load.
pub fn build(cfg: &ExperimentConfig, db: &Database) -> Result<(Structure, MetricsCounters)> {
    let pool = BufferPool::shared(cfg.buffer.pages());
    let mut structure = Structure::new(
        cfg.structure,
        StoreConfig::new(cfg.backend),
        &pool,
        cfg.policy,
        cfg.stored_view_join(),
    )?;
    structure.bulk_load(db)?;
    let load = structure.counters();
    Ok((structure, load))
}

fn report(
    cfg: &ExperimentConfig,
    structure: &Structure,
    counters: MetricsCounters,
    ops: u64,
    rows_out: u64,
    peak: usize,
    elapsed_ms: f64,
) -> MetricsReport {
    MetricsReport {
        config: *cfg,
        ops,
        rows_out,
        peak_buffered: peak as u64,
        counters,
        primary_space: structure.primary_space(),
        support_space: structure.support_space(),
        elapsed_ms,
    }
}
