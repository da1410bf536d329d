use std::fs;

use moi::formats::*;
use moi_core::attribution::{AttributionMatrix, LabelTable};
use moi_core::community::Partition;
use moi_core::graph::ExplanationGraph;
use moi_core::Matrix;
use proptest::prelude::*;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("feat_{i}")).collect()
}

fn phi_of(n: usize, d: usize, data: Vec<f64>) -> AttributionMatrix {
    AttributionMatrix::new(Matrix::from_vec(n, d, data).unwrap(), names(d), None).unwrap()
}

#[test]
fn moiphi_layout_by_hand() {
    let phi = phi_of(1, 2, vec![1.5, -2.0]);
    let bytes = moiphi_bytes(&phi);
    assert_eq!(&bytes[..8], b"MOIPHI1\0");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    let name_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    assert_eq!(&bytes[20..20 + name_len], b"feat_0\nfeat_1");
    assert_eq!(f64::from_le_bytes(bytes[20 + name_len..28 + name_len].try_into().unwrap()), 1.5);
    assert_eq!(bytes.len(), 20 + name_len + 16);
}

#[test]
fn csv_and_moiphi_agree() {
    let dir = tempfile::tempdir().unwrap();
    let phi = phi_of(3, 2, vec![0.1, 0.2, -1e-300, 3.0e12, 1.0 / 3.0, -0.0]);
    write_phi_csv(&dir.path().join("phi.csv"), &phi).unwrap();
    write_moiphi(&dir.path().join("phi.bin"), &phi).unwrap();
    let a = load_attributions(&dir.path().join("phi.csv"), PhiFormat::Csv).unwrap();
    let b = load_attributions(&dir.path().join("phi.bin"), PhiFormat::Moiphi).unwrap();
    assert_eq!(a.values(), b.values());
    assert_eq!(a.feature_names(), b.feature_names());
    assert_eq!(a.instance_ids(), &["0", "1", "2"]);
}

#[test]
fn csv_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "a,b\n1,2\n3\n").unwrap();
    let err = read_phi_csv(&p).unwrap_err().to_string();
    assert!(err.ends_with("row 2: expected 2 fields"), "{err}");
    fs::write(&p, "a,b\n1,NaN\n").unwrap();
    assert!(read_phi_csv(&p).unwrap_err().to_string().contains("row 1, column b"));
    fs::write(&p, "a,a\n1,2\n").unwrap();
    assert!(read_phi_csv(&p).unwrap_err().to_string().contains("duplicate"));
    fs::write(&p, "a,b\n1,x\n").unwrap();
    assert_eq!(read_phi_csv(&p).unwrap_err().exit_code(), 3);
}

#[test]
fn moiphi_rejects_damage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("phi.moiphi");
    let bytes = moiphi_bytes(&phi_of(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
    fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_moiphi(&p).unwrap_err().to_string().contains("truncated"));
    let mut extra = bytes.clone();
    extra.push(0);
    fs::write(&p, &extra).unwrap();
    assert!(read_moiphi(&p).unwrap_err().to_string().contains("trailing"));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    fs::write(&p, &magic).unwrap();
    assert!(read_moiphi(&p).unwrap_err().to_string().contains("magic"));
    let mut nan = bytes;
    let at = nan.len() - 8;
    nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    fs::write(&p, &nan).unwrap();
    assert!(read_moiphi(&p).is_err());
}

#[test]
fn labels_round_trip_and_align() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("labels.csv");
    let t = LabelTable {
        instance_ids: vec!["b".into(), "a".into()],
        group: vec!["g1".into(), "g0".into()],
        class: None,
        y: Some(vec![1.0, 0.0]),
        yhat: Some(vec![0.0, 1.0]),
    };
    write_labels(&p, &t).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap(), "instance_id,group,y,yhat\nb,g1,1,0\na,g0,0,1\n");
    let back = read_labels(&p).unwrap();
    assert_eq!(back, t);
    let aligned = back.align(&["a".into(), "b".into()]).unwrap();
    assert_eq!(aligned.group, vec!["g0", "g1"]);
    assert_eq!(aligned.yhat, Some(vec![true, false]));
    fs::write(&p, "instance_id,y\n0,1\n").unwrap();
    assert!(read_labels(&p).is_err());
}

#[test]
fn dense_and_sparse_weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = Matrix::from_rows(&[&[0.0, 0.5, -0.25], &[0.5, 0.0, 0.0], &[-0.25, 0.0, 0.0]]).unwrap();
    write_moiwd(&dir.path().join("W.dense"), &w).unwrap();
    assert_eq!(read_moiwd(&dir.path().join("W.dense")).unwrap(), w);

    let g = ExplanationGraph::from_edges(4, &[(0, 1, 0.5), (0, 2, -0.25), (2, 3, 1.0)]).unwrap();
    let p = dir.path().join("W.sparse");
    write_moiws(&p, &g).unwrap();
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..7], b"MOIWS1\0");
    assert_eq!(bytes.len(), 7 + 4 + 8 + 3 * 16);
    assert_eq!(read_moiws(&p).unwrap().edges(), g.edges());

    // swap the first two records so they are out of order
    let mut swapped = bytes.clone();
    let (a, b) = (19, 35);
    let first = swapped[a..b].to_vec();
    let second = swapped[b..b + 16].to_vec();
    swapped[a..a + 16].copy_from_slice(&second);
    swapped[a + 16..a + 32].copy_from_slice(&first);
    fs::write(&p, &swapped).unwrap();
    assert!(read_moiws(&p).unwrap_err().to_string().contains("sorted"));
}

#[test]
fn edge_list_and_graphml() {
    let g = ExplanationGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.25)]).unwrap();
    let n = vec!["age".to_string(), "income".into(), "debt".into()];
    assert_eq!(edge_tsv(&g, &n), "src\tdst\tweight\nage\tincome\t0.5\nincome\tdebt\t0.25\n");
    let xml = graphml(&g, &n, Some(&Partition::new(&[0, 0, 1])));
    assert!(xml.contains("attr.name=\"module\""));
    assert_eq!(xml.matches("<node ").count(), 3);
    assert_eq!(xml.matches("<edge ").count(), 2);
}

#[test]
fn predictions_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.prediction.csv");
    write_predictions(&p, &[0.25, 1.0]).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap(), "prediction\n0.25\n1\n");
    assert_eq!(read_predictions(&p).unwrap(), vec![0.25, 1.0]);
    fs::write(&p, "score\n1\n").unwrap();
    assert!(read_predictions(&p).is_err());
}

proptest! {
    #[test]
    fn moiphi_round_trip_is_bitwise(n in 1usize..6, d in 2usize..6, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = seed;
        let data: Vec<f64> = (0..n * d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f64::from_bits(s >> 2);
                if v.is_finite() { v } else { 1.0 }
            })
            .collect();
        let phi = phi_of(n, d, data);
        let p = dir.path().join("phi.moiphi");
        write_moiphi(&p, &phi).unwrap();
        let back = read_moiphi(&p).unwrap();
        let bits = |m: &AttributionMatrix| m.values().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&phi));
        let c = dir.path().join("phi.csv");
        write_phi_csv(&c, &phi).unwrap();
        prop_assert_eq!(bits(&read_phi_csv(&c).unwrap()), bits(&phi));
    }
}
