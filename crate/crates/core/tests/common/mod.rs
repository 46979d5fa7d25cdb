#![allow(dead_code)]

use choreo_core::{Census, Location, RunReport, Value};

/// The payload of an observed located value, if present.
pub fn present(v: &Value) -> Option<&Value> {
    match v.as_union().expect("observed located value") {
        (1, inner) => Some(inner),
        _ => None,
    }
}

pub fn ints(v: &Value) -> Vec<i64> {
    v.as_seq().unwrap().iter().map(|x| x.as_int().unwrap()).collect()
}

/// Client-visible responses of a KVS run.
pub fn client_responses(report: &RunReport) -> Vec<i64> {
    let v = report.result("client").expect("client completed");
    let (responses, _) = v.as_pair().unwrap();
    ints(present(responses).expect("client holds its responses"))
}

/// Store of a KVS server as it saw it at the end.
pub fn store_of(report: &RunReport, server: &str) -> Vec<(String, i64)> {
    let v = report.result(server).expect("server completed");
    let (_, stores) = v.as_pair().unwrap();
    present(stores)
        .expect("server holds its store")
        .as_map()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.as_text().unwrap().to_owned(), v.as_int().unwrap()))
        .collect()
}

pub fn loc(name: &str) -> Location {
    Location::new(name).unwrap()
}

pub fn names(c: &Census) -> Vec<String> {
    c.iter().map(|l| l.name().to_owned()).collect()
}

/// Asserts that a report passes every structural check.
pub fn assert_well_formed(r: &RunReport) {
    r.check_fifo().unwrap();
    r.check_branch_consistency().unwrap();
    r.check_agreement().unwrap();
    r.check_enclave_silence().unwrap();
}
