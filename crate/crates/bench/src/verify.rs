//! Equivalence checks of every structure against the nested-loops oracle.

use mergeidx::join::canonical_sort;
use mergeidx::store::SMALL_BUFFER_PAGES;
use mergeidx::workload::{generate, sample, DeltaGen};
use mergeidx::{
    Backend, BufferPool, Database, IncludedColumns, JoinKey, JoinRow, JoinType, Scope, ShadowDb,
    StoreConfig, Structure, StructureKind, WorkloadConfig,
};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    /// Cases compared.
    pub cases: usize,
    /// First mismatch, if any.
    pub failure: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

const SELECTIVITIES: [f64; 3] = [0.2, 0.5, 1.0];

/// At most 64 stock and 256 orderline rows.
pub fn tiny_workload(seed: u64) -> WorkloadConfig {
    WorkloadConfig {
        warehouses: 2,
        items_per_warehouse: 8 + (seed % 25) as u32,
        orderlines_per_warehouse: 40 + (seed % 89) as u32,
        so: SELECTIVITIES[(seed % 3) as usize],
        policy: IncludedColumns::ALL[(seed / 3 % 3) as usize],
        seed,
    }
}

/// Small pages so tiny databases still build multi-level trees and many runs.
fn store_config(backend: Backend) -> StoreConfig {
    StoreConfig::new(backend)
        .with_page_size(1024)
        .with_memtable_bytes(4096)
}

/// Every structure variant: merged, traditional, and views storing inner
/// and full outer joins.
fn variants() -> Vec<(StructureKind, JoinType)> {
    vec![
        (StructureKind::Merged, JoinType::Inner),
        (StructureKind::Traditional, JoinType::Inner),
        (StructureKind::Matview, JoinType::Inner),
        (StructureKind::Matview, JoinType::FullOuter),
    ]
}

fn build(
    kind: StructureKind,
    view: JoinType,
    backend: Backend,
    policy: IncludedColumns,
    db: &Database,
) -> mergeidx::Result<Structure> {
    let pool = BufferPool::shared(SMALL_BUFFER_PAGES);
    let mut s = Structure::new(kind, store_config(backend), &pool, policy, view)?;
    s.bulk_load(db)?;
    Ok(s)
}

fn collect(s: &Structure, jt: JoinType, scope: Scope) -> mergeidx::Result<Vec<JoinRow>> {
    let mut rows = s.join(jt, scope)?.collect::<mergeidx::Result<Vec<_>>>()?;
    canonical_sort(&mut rows);
    Ok(rows)
}

fn label(kind: StructureKind, view: JoinType, backend: Backend) -> String {
    match kind {
        StructureKind::Matview => format!("{kind}({view})/{backend}"),
        _ => format!("{kind}/{backend}"),
    }
}

/// Compares every answerable join type of `s` with the oracle.
fn compare_all(s: &Structure, oracle: &ShadowDb, what: &str) -> Result<usize, String> {
    let mut cases = 0;
    for jt in JoinType::ALL {
        if !s.can_answer(jt) {
            continue;
        }
        let got = collect(s, jt, Scope::All).map_err(|e| format!("{what} {jt}: {e}"))?;
        let want = oracle.nested_loops_join(jt);
        if got != want {
            return Err(format!(
                "{what} {jt}: {} rows, oracle has {}",
                got.len(),
                want.len()
            ));
        }
        cases += 1;
    }
    Ok(cases)
}

/// Full joins of every structure, backend and join type on seeded tiny
/// databases.
pub fn oracle_equivalence(seeds: u64) -> Check {
    let mut check = Check {
        name: "oracle equivalence",
        cases: 0,
        failure: None,
    };
    for seed in 0..seeds {
        let cfg = tiny_workload(seed);
        let db = generate(&cfg);
        let oracle = ShadowDb::from_database(&db).projected(cfg.policy);
        for backend in Backend::ALL {
            for (kind, view) in variants() {
                let what = format!("seed {seed} {}", label(kind, view, backend));
                let result = build(kind, view, backend, cfg.policy, &db)
                    .map_err(|e| format!("{what}: {e}"))
                    .and_then(|s| compare_all(&s, &oracle, &what));
                match result {
                    Ok(n) => check.cases += n,
                    Err(e) => {
                        check.failure = Some(e);
                        return check;
                    }
                }
            }
        }
    }
    check
}

/// The four-row sample database and the point lookup of item 2.
pub fn golden() -> Check {
    let mut check = Check {
        name: "golden example",
        cases: 0,
        failure: None,
    };
    let db = sample::four_rows();
    let policy = IncludedColumns::Covering;
    let full = db.projected(policy);
    let expected_inner: Vec<JoinRow> = (0..4)
        .map(|n| JoinRow::pair(&full.stock[n / 2], &full.orderlines[n]))
        .collect();
    let expected_point = expected_inner[2..].to_vec();
    for backend in Backend::ALL {
        for (kind, view) in variants() {
            let what = label(kind, view, backend);
            let outcome = build(kind, view, backend, policy, &db).and_then(|s| {
                Ok((
                    collect(&s, JoinType::Inner, Scope::All)?,
                    collect(&s, JoinType::Inner, Scope::Point(JoinKey::new(1, 2)))?,
                ))
            });
            match outcome {
                Ok((inner, point)) if inner == expected_inner && point == expected_point => {
                    check.cases += 2;
                }
                Ok(_) => {
                    check.failure = Some(format!("{what}: rows differ from the expected four"));
                    return check;
                }
                Err(e) => {
                    check.failure = Some(format!("{what}: {e}"));
                    return check;
                }
            }
        }
    }
    check
}

/// Random delta streams applied to every structure; joins compared with
/// the oracle every `every` deltas and at the end.
pub fn maintenance(seeds: u64, deltas: usize, every: usize) -> Check {
    let mut check = Check {
        name: "maintenance freshness",
        cases: 0,
        failure: None,
    };
    for seed in 0..seeds {
        let cfg = tiny_workload(seed);
        let db = generate(&cfg);
        for backend in Backend::ALL {
            for (kind, view) in variants() {
                let what = format!("seed {seed} {}", label(kind, view, backend));
                if let Err(e) = run_deltas(
                    kind,
                    view,
                    backend,
                    &cfg,
                    &db,
                    deltas,
                    every,
                    &mut check.cases,
                ) {
                    check.failure = Some(format!("{what}: {e}"));
                    return check;
                }
            }
        }
    }
    check
}

#[allow(clippy::too_many_arguments)]
fn run_deltas(
    kind: StructureKind,
    view: JoinType,
    backend: Backend,
    cfg: &WorkloadConfig,
    db: &Database,
    deltas: usize,
    every: usize,
    cases: &mut usize,
) -> Result<(), String> {
    let mut s = build(kind, view, backend, cfg.policy, db).map_err(|e| e.to_string())?;
    let mut shadow = ShadowDb::from_database(db);
    let mut gen = DeltaGen::new(cfg, cfg.seed ^ 0x5eed);
    for n in 1..=deltas {
        let delta = gen.next_delta(&shadow);
        shadow
            .apply(&delta)
            .map_err(|e| format!("oracle rejected delta {n}: {e}"))?;
        s.apply(&delta).map_err(|e| format!("delta {n}: {e}"))?;
        if n % every == 0 || n == deltas {
            *cases += compare_all(
                &s,
                &shadow.projected(cfg.policy),
                &format!("after delta {n}"),
            )?;
        }
    }
    Ok(())
}

/// LSM after compaction scans exactly what the b-tree scans.
pub fn backend_agreement(seeds: u64) -> Check {
    let mut check = Check {
        name: "backend agreement",
        cases: 0,
        failure: None,
    };
    for seed in 0..seeds {
        let cfg = tiny_workload(seed);
        let db = generate(&cfg);
        for (kind, view) in variants() {
            let scans = Backend::ALL.map(|backend| {
                let mut s = build(kind, view, backend, cfg.policy, &db)?;
                s.compact()?;
                Ok::<_, mergeidx::Error>(
                    s.stores()
                        .iter()
                        .map(|st| st.scan_all().collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                )
            });
            match scans {
                [Ok(a), Ok(b)] if a == b => check.cases += 1,
                [Ok(_), Ok(_)] => {
                    check.failure = Some(format!("seed {seed} {kind}: backends scan differently"));
                    return check;
                }
                [Err(e), _] | [_, Err(e)] => {
                    check.failure = Some(format!("seed {seed} {kind}: {e}"));
                    return check;
                }
            }
        }
    }
    check
}

/// The suite behind `verify`.
pub fn run_all(seeds: u64) -> Vec<Check> {
    vec![
        golden(),
        oracle_equivalence(seeds),
        maintenance(seeds.min(20), 200, 50),
        backend_agreement(seeds),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_workload_bounds() {
        for seed in 0..200 {
            let cfg = tiny_workload(seed);
            assert!(cfg.warehouses * cfg.items_per_warehouse <= 64);
            assert!(cfg.warehouses * cfg.orderlines_per_warehouse <= 256);
        }
    }

    #[test]
    fn golden_passes() {
        let c = golden();
        assert!(c.passed(), "{:?}", c.failure);
        assert_eq!(c.cases, 16);
    }
}
