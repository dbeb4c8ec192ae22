//! CSV readers and writers for requests, fleets, decisions and match
//! results.

use std::io::Read;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::matcher::{Decision, DispatchGraph, MatchingResult, RequestStatus};
use crate::world::{Request, TruckSpec};

pub const REQUESTS_HEADER: &str = "id,source,destination,size";
pub const FLEET_HEADER: &str = "id,initial_location,capacity";
pub const MATCHES_HEADER: &str = "request_id,source,destination,size,status,route,added_cost_s";

fn write_rows<T: Serialize>(header: &str, rows: &[T]) -> Result<String> {
    // The csv writer only emits a header once it has seen a record, so
    // empty tables get theirs by hand.
    if rows.is_empty() {
        return Ok(format!("{header}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_rows<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn requests_csv(requests: &[Request]) -> Result<String> {
    write_rows(REQUESTS_HEADER, requests)
}

pub fn fleet_csv(fleet: &[TruckSpec]) -> Result<String> {
    write_rows(FLEET_HEADER, fleet)
}

pub fn read_requests<R: Read>(reader: R) -> Result<Vec<Request>> {
    read_rows(reader)
}

pub fn read_fleet<R: Read>(reader: R) -> Result<Vec<TruckSpec>> {
    read_rows(reader)
}

/// Reads `truck,epoch,from,to,depart_s,eta_s`; extra columns such as the
/// matched volume of a decision log are ignored.
pub fn read_decisions<R: Read>(reader: R) -> Result<Vec<Decision>> {
    read_rows(reader)
}

/// One row per request: `matched` rows carry the `truck:from>to` hops.
pub fn matches_csv(g: &DispatchGraph, result: &MatchingResult) -> String {
    let mut out = String::from(MATCHES_HEADER);
    out.push('\n');
    for o in &result.outcomes {
        let r = &o.request;
        let (status, route, cost) = match &o.status {
            RequestStatus::Matched(p) => ("matched", p.describe(g), p.added_cost_s.to_string()),
            RequestStatus::Unserved => ("unserved", String::new(), String::new()),
            RequestStatus::Pending => ("pending", String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id, r.source, r.destination, r.size, status, route, cost
        ));
    }
    out
}
