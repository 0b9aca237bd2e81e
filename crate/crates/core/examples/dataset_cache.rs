//! Sensor CSV in, windows out, and the binary window cache.
//!
//!     cargo run --example dataset_cache

use std::io::Cursor;

use litevr::data::{
    load_csv, make_windows, read_cache, synthesize, write_cache, write_csv, CsvSchema, SyntheticSpec,
};

fn main() -> litevr::Result<()> {
    let dir = std::env::temp_dir().join("litevr-dataset-cache");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("sensors.csv");

    let raw = synthesize(&SyntheticSpec {
        n_sessions: 3,
        rows_per_session: 80,
        ..SyntheticSpec::default()
    })?;
    write_csv(&raw, std::fs::File::create(&csv)?, &["three synthetic sessions".into()])?;

    let loaded = load_csv(&csv, &CsvSchema::default())?;
    assert_eq!(loaded, raw);
    println!("{} rows, {} features, sessions {:?}", loaded.len(), loaded.n_features(), loaded.sessions());

    // windows never cross a session boundary: 3 * (80 - 60 + 1)
    let windows = make_windows(&loaded, 60, 1)?;
    println!("{} windows of {} steps", windows.len(), windows.timesteps());

    let mut bytes = Vec::new();
    write_cache(&windows, &mut bytes)?;
    let back = read_cache(Cursor::new(&bytes))?;
    assert_eq!(back, windows);
    println!("cache: {} bytes, round trip ok", bytes.len());

    // only some columns
    let schema = CsvSchema {
        feature_columns: Some(vec!["HeadEulX".into(), "HeadEulZ".into()]),
        ..CsvSchema::default()
    };
    println!("projected: {:?}", load_csv(&csv, &schema)?.feature_names);
    Ok(())
}
