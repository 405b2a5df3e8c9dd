use nasflat::archspace::{read_arch_jsonl, write_arch_jsonl, SearchSpace};
use nasflat::devicesets::{correlation_matrix, LatencyTable};
use nasflat::synthbench::{gen_dataset, gen_family, gen_planted_family, distinct_archs};

#[test]
fn two_planted_clusters_show_as_blocks() {
    let space = SearchSpace::nb201();
    // roots dev00, dev01; clones alternate between them
    let devs = gen_family(&space, 8, 2, (0.02, 0.05), 0.02, 3);
    let (_, table) = gen_dataset(&space, &devs, 400, 4);
    let ids = table.devices();
    let c = correlation_matrix(&table, &ids).unwrap();
    let (mut within, mut across) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..ids.len() {
        for j in 0..i {
            if i % 2 == j % 2 {
                within = within.min(c[i][j]);
            } else {
                across = across.max(c[i][j]);
            }
        }
    }
    assert!(within > across, "min within {within}, max across {across}");
    assert!(within > 0.9, "{within}");
}

#[test]
fn files_round_trip_byte_identically() {
    let space = SearchSpace::fbnet();
    let devs = gen_family(&space, 4, 2, (0.1, 0.5), 0.02, 9);
    let mut out = Vec::new();
    for _ in 0..2 {
        let (archs, table) = gen_dataset(&space, &devs, 60, 10);
        let dir = tempfile::tempdir().unwrap();
        let ap = dir.path().join("archs.jsonl");
        let mut buf = Vec::new();
        write_arch_jsonl(&mut buf, &archs).unwrap();
        std::fs::write(&ap, &buf).unwrap();
        let back = read_arch_jsonl(&ap, &[space.clone()]).unwrap();
        assert_eq!(back, archs);
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let again = LatencyTable::read_csv(csv.as_slice()).unwrap();
        assert_eq!(again.len(), 240);
        out.push((buf, csv));
    }
    assert!(out[0] == out[1]);
}

#[test]
fn planted_family_reaches_targets() {
    let space = SearchSpace::nb201();
    let archs = distinct_archs(&space, 400, 2);
    let plan = [None, None, Some((0, 0.8)), Some((1, 0.4))];
    let (devs, achieved) = gen_planted_family(&space, &archs, &plan, 0.02, 5);
    assert_eq!(devs.len(), 4);
    for (p, a) in plan.iter().zip(&achieved) {
        if let (Some((_, want)), Some(got)) = (p, a) {
            assert!((got - want).abs() < 0.05, "{want} -> {got}");
        }
    }
}
