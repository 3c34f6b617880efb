mod common;

use common::{build, sorted, tiny};
use mergeidx::workload::{generate, sample};
use mergeidx::{
    Backend, IncludedColumns, JoinKey, JoinRow, JoinType, Scope, ShadowDb, StructureKind,
};

#[test]
fn every_structure_matches_the_oracle() {
    let policies = IncludedColumns::ALL;
    for seed in 0..100u64 {
        let so = [0.2, 0.5, 1.0][seed as usize % 3];
        let policy = policies[seed as usize % 3];
        let cfg = tiny(seed, so, policy);
        let db = generate(&cfg);
        let oracle = ShadowDb::from_database(&db).projected(policy);
        for backend in Backend::ALL {
            for kind in StructureKind::ALL {
                for stored in [JoinType::Inner, JoinType::FullOuter] {
                    if stored == JoinType::Inner && kind != StructureKind::Matview {
                        continue;
                    }
                    let s = build(kind, backend, policy, stored, &db);
                    for jt in JoinType::ALL.into_iter().filter(|jt| s.can_answer(*jt)) {
                        assert_eq!(
                            sorted(s.join(jt, Scope::All).unwrap()),
                            oracle.nested_loops_join(jt),
                            "seed {seed} {backend} {kind} stored {stored} {jt}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn scoped_joins_select_their_slice() {
    let cfg = tiny(3, 0.5, IncludedColumns::Covering);
    let db = generate(&cfg);
    let oracle = ShadowDb::from_database(&db).projected(cfg.policy);
    for kind in StructureKind::ALL {
        let s = build(kind, Backend::Lsm, cfg.policy, JoinType::FullOuter, &db);
        for jt in JoinType::ALL {
            let all = oracle.nested_loops_join(jt);
            let w2: Vec<JoinRow> = all
                .iter()
                .filter(|r| r.key.warehouse_id == 2)
                .cloned()
                .collect();
            assert_eq!(sorted(s.join(jt, Scope::Warehouse(2)).unwrap()), w2);
            let k = JoinKey::new(1, 3);
            let point: Vec<JoinRow> = all.iter().filter(|r| r.key == k).cloned().collect();
            assert_eq!(sorted(s.join(jt, Scope::Point(k)).unwrap()), point);
        }
    }
}

#[test]
fn range_join_is_sorted_by_join_key() {
    let db = generate(&tiny(9, 0.5, IncludedColumns::Keys));
    for kind in StructureKind::ALL {
        let s = build(
            kind,
            Backend::BTree,
            IncludedColumns::Keys,
            JoinType::FullOuter,
            &db,
        );
        let keys: Vec<JoinKey> = s
            .join(JoinType::FullOuter, Scope::Warehouse(1))
            .unwrap()
            .map(|r| r.unwrap().key)
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]), "{kind}");
        assert!(keys.iter().all(|k| k.warehouse_id == 1));
    }
}

#[test]
fn full_outer_count_follows_group_formula() {
    for seed in 0..20 {
        let db = generate(&tiny(seed, 0.5, IncludedColumns::Keys));
        let expected: usize = db
            .group_sizes()
            .values()
            .map(|&(r, s)| if r > 0 && s > 0 { r * s } else { r + s })
            .sum();
        let s = build(
            StructureKind::Merged,
            Backend::BTree,
            IncludedColumns::Keys,
            JoinType::FullOuter,
            &db,
        );
        assert_eq!(
            s.join(JoinType::FullOuter, Scope::All).unwrap().count(),
            expected
        );
    }
}

#[test]
fn four_rows_through_all_structures() {
    let db = sample::four_rows();
    let p = db.projected(IncludedColumns::All);
    let table_two = vec![
        JoinRow::pair(&p.stock[0], &p.orderlines[0]),
        JoinRow::pair(&p.stock[0], &p.orderlines[1]),
        JoinRow::pair(&p.stock[1], &p.orderlines[2]),
        JoinRow::pair(&p.stock[1], &p.orderlines[3]),
    ];
    for backend in Backend::ALL {
        for kind in StructureKind::ALL {
            let s = build(kind, backend, IncludedColumns::All, JoinType::Inner, &db);
            let rows: Vec<_> = s
                .join(JoinType::Inner, Scope::Warehouse(1))
                .unwrap()
                .map(|r| r.unwrap())
                .collect();
            assert_eq!(rows, table_two);
            assert!(s
                .join(JoinType::Inner, Scope::Warehouse(7))
                .unwrap()
                .next()
                .is_none());
        }
    }
}

#[test]
fn semi_joins_on_a_lonely_stock_row() {
    let mut db = sample::four_rows();
    db.orderlines.clear();
    db.stock.truncate(1);
    let s = build(
        StructureKind::Merged,
        Backend::BTree,
        IncludedColumns::Keys,
        JoinType::FullOuter,
        &db,
    );
    assert_eq!(s.join(JoinType::LeftSemi, Scope::All).unwrap().count(), 0);
    assert_eq!(s.join(JoinType::RightSemi, Scope::All).unwrap().count(), 0);
    let padded: Vec<_> = s
        .join(JoinType::FullOuter, Scope::All)
        .unwrap()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(
        padded,
        vec![JoinRow::stock_only(
            &db.stock[0].projected(IncludedColumns::Keys)
        )]
    );
}
