#![no_main]

use libfuzzer_sys::fuzz_target;
use w2s_core::harness::{
    read_csv, write_csv, AggregateRow, DiagnoseRow, Record, RegimeRow, ResultRow, TailRow,
};

fn round_trip<R: Record>(data: &[u8]) {
    if let Ok(rows) = read_csv::<R, _>(data) {
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).expect("parsed rows serialize");
        let again = read_csv::<R, _>(buf.as_slice()).expect("written rows parse");
        assert_eq!(again.len(), rows.len());
    }
}

fuzz_target!(|data: &[u8]| {
    round_trip::<ResultRow>(data);
    round_trip::<AggregateRow>(data);
    round_trip::<RegimeRow>(data);
    round_trip::<TailRow>(data);
    round_trip::<DiagnoseRow>(data);
});
