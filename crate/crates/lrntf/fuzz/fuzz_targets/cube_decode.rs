#![no_main]

use libfuzzer_sys::fuzz_target;
use lrntf::io::{decode_cube, encode_cube, CubeHeader};

// Input layout: header JSON up to the first newline, raw payload after it.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == b'\n') else {
        return;
    };
    let (header_bytes, payload) = (&data[..split], &data[split + 1..]);
    let Ok(header) = CubeHeader::parse(header_bytes) else {
        return;
    };
    // Cap allocations; the dimension arithmetic itself is checked.
    if header.payload_len().map_or(true, |n| n > 1 << 20) {
        return;
    }
    if let Ok(tensor) = decode_cube(&header, payload) {
        // Anything that decodes must re-encode byte for byte.
        let (header2, bytes) = encode_cube(&tensor);
        assert_eq!(header2, header);
        assert_eq!(bytes, payload);
        let again = decode_cube(&header2, &bytes).expect("re-decode of encoded cube");
        assert_eq!(again, tensor);
    }
});
