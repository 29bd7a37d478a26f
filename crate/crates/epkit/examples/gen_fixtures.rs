//! Regenerates the canonical matrix fixtures. Run from the crate root:
//! `cargo run --example gen_fixtures`.

use std::path::Path;

use epkit::io::{save_matrix_file, MatrixFile};
use epkit::linalg::{kron_sum, CMatrix, C64};

fn from_rows(rows: &[&[f64]]) -> CMatrix {
    CMatrix::from_fn(rows.len(), rows[0].len(), |i, j| C64::new(rows[i][j], 0.0))
}

fn save(dir: &Path, name: &str, m: &CMatrix, label: &str) {
    let file = MatrixFile::from_matrix(m, Some(label)).expect("finite fixture");
    save_matrix_file(&dir.join(name), &file).expect("fixture written");
    println!("wrote {name}");
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).expect("fixtures dir");

    let n2 = from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
    save(&dir, "ep2.json", &n2, "second-order chain");

    let detuned = |eps: f64| from_rows(&[&[0.0, 1.0], &[eps, 0.0]]);
    save(
        &dir,
        "ep2_detuned_1e-2.json",
        &detuned(1e-2),
        "detuned pair, back-coupling 1e-2",
    );
    save(
        &dir,
        "ep2_detuned_1e-4.json",
        &detuned(1e-4),
        "detuned pair, back-coupling 1e-4",
    );

    let composite = kron_sum(&n2, &n2).expect("4x4 fits");
    save(&dir, "ep3_composite.json", &composite, "third-order composite");

    save(
        &dir,
        "identity2.json",
        &epkit::linalg::identity(2),
        "identity",
    );

    let diag = from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]);
    save(&dir, "diag123.json", &diag, "distinct levels");

    let factor = from_rows(&[&[0.0, 0.0], &[1.0, 0.0]]);
    save(&dir, "detune_factor.json", &factor, "lower coupling direction");
}
