use proptest::prelude::*;
use unmix_cli::cube::{read_cube, write_cube};
use unmix_cli::io::{column_names, read_matrix_csv, write_matrix_csv};
use unmix_core::DMatrix;

fn matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..8, 1usize..12).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-1e6f64..1e6, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cube_round_trip_is_bitwise(m in matrix(), with_grid in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let grid = with_grid.then(|| (1, m.ncols()));
        let header = write_cube(dir.path(), "cube", &m, grid).unwrap();
        let (h, back) = read_cube(&header).unwrap();
        prop_assert_eq!(h.grid(), grid);
        prop_assert_eq!((h.bands, h.pixels), m.shape());
        prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        // The payload path resolves to the same cube.
        let (_, again) = read_cube(&dir.path().join("cube.bin")).unwrap();
        prop_assert_eq!(back, again);
    }

    #[test]
    fn csv_round_trip_is_bitwise(m in matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m, column_names("endmember", m.ncols()), None).unwrap();
        let lib = read_matrix_csv(&path).unwrap();
        prop_assert_eq!(lib.names, column_names("endmember", m.ncols()));
        prop_assert!(m.iter().zip(lib.spectra.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
