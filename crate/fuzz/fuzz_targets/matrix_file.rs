//! Matrix file decoding must never panic, and everything that validates
//! must survive a canonical round trip byte-for-byte.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = epkit::io::MatrixFile::parse_str(text) else {
        return;
    };
    let Ok(matrix) = file.to_matrix() else {
        return;
    };
    let rewritten = epkit::io::MatrixFile::from_matrix(&matrix, file.label.as_deref())
        .expect("a validated matrix is finite");
    let canonical = rewritten.canonical_json();
    let reparsed =
        epkit::io::MatrixFile::parse_str(&canonical).expect("canonical output reparses");
    assert_eq!(reparsed.canonical_json(), canonical, "round trip not stable");
    reparsed.to_matrix().expect("canonical output revalidates");
});
