use axum::extract::State;
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use expressforge_core::coding::proposal_counts;
use expressforge_core::report::{os_table, qra_table, study_report, taxonomy_table};
use expressforge_core::Format;

use crate::{ApiError, AppState};

/// Picks the first acceptable format by descending q-value; a missing header
/// or a wildcard selects `default`.
pub fn negotiate(accept: Option<&str>, offered: &[Format], default: Format) -> Option<Format> {
    let Some(accept) = accept.filter(|a| !a.trim().is_empty()) else {
        return Some(default);
    };
    let mut ranges: Vec<(&str, f64)> = accept
        .split(',')
        .map(|range| {
            let mut parts = range.split(';').map(str::trim);
            let media = parts.next().unwrap_or_default();
            let q = parts
                .filter_map(|p| p.strip_prefix("q="))
                .find_map(|q| q.parse::<f64>().ok())
                .unwrap_or(1.0);
            (media, q)
        })
        .filter(|(_, q)| *q > 0.0)
        .collect();
    ranges.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranges.into_iter().find_map(|(media, _)| match media {
        "*/*" => Some(default),
        "text/*" if offered.contains(&default) && default != Format::Json => Some(default),
        "text/*" => offered.iter().copied().find(|f| *f != Format::Json),
        _ => offered.iter().copied().find(|f| f.content_type() == media),
    })
}

fn respond(
    headers: &HeaderMap,
    offered: &[Format],
    default: Format,
    render: impl FnOnce(Format) -> String,
) -> Response {
    let accept = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok());
    match negotiate(accept, offered, default) {
        Some(format) => {
            let content_type = format!("{}; charset=utf-8", format.content_type());
            ([(header::CONTENT_TYPE, content_type)], render(format)).into_response()
        }
        None => ApiError::not_acceptable(format!(
            "available: {}",
            offered.iter().map(|f| f.content_type()).collect::<Vec<_>>().join(", ")
        ))
        .into_response(),
    }
}

const TABLE_FORMATS: [Format; 3] = [Format::Csv, Format::Markdown, Format::Json];

pub async fn os(State(app): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let table = {
        let store = app.lock();
        let codes = &store.base().codes;
        let counts = proposal_counts(codes, &store.clips).map_err(|e| ApiError::conflict(e.to_string()))?;
        let columns: Vec<String> = codes.categories.iter().map(|c| c.id.clone()).collect();
        os_table(&counts, &columns)?
    };
    Ok(respond(&headers, &TABLE_FORMATS, Format::Csv, |f| table.render(f)))
}

pub async fn qra(State(app): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let table = {
        let store = app.lock();
        let bundle = store.to_bundle();
        qra_table(&bundle.codes, &bundle.responses)?
    };
    Ok(respond(&headers, &TABLE_FORMATS, Format::Csv, |f| table.render(f)))
}

pub async fn taxonomy(State(app): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let table = taxonomy_table(&app.lock().base().codes)?;
    Ok(respond(&headers, &TABLE_FORMATS, Format::Csv, |f| table.render(f)))
}

pub async fn study(State(app): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let bundle = app.lock().to_bundle();
    let report = study_report(&bundle)?;
    Ok(respond(
        &headers,
        &[Format::Markdown, Format::Json],
        Format::Markdown,
        |f| match f {
            Format::Json => serde_json::to_string_pretty(&report).expect("serializable"),
            _ => report.to_markdown(),
        },
    ))
}
