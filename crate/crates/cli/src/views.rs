//! View requests shared by the HTTP server and `export`.

use std::collections::BTreeMap;

use modallens::interactions::Interaction;
use modallens::projection::HeatMode;
use modallens::service::{
    render, AnalysisService, BrushQuery, ProjectionQuery, ServiceError, TemplateQuery,
    DEFAULT_TOP_K,
};
use modallens::templates::{Item, TemplateSortKey};
use modallens::Modality;

pub const VIEWS: [&str; 7] = [
    "summary",
    "group",
    "templates",
    "projection",
    "instance",
    "metrics",
    "meta",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    All,
    Ids(Vec<String>),
    Group(Interaction),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewRequest {
    Summary,
    Group(BrushQuery),
    Templates {
        scope: Scope,
        sort: Option<TemplateSortKey>,
        min_support: Option<f64>,
    },
    Projection {
        modality: Modality,
        scope: Scope,
        heat_mode: Option<HeatMode>,
        template: Option<Vec<Item>>,
    },
    Instance {
        id: String,
        k: usize,
    },
    Metrics,
    Meta,
}

fn invalid(msg: impl Into<String>) -> ServiceError {
    ServiceError::Validation(msg.into())
}

fn parse<T: std::str::FromStr>(
    params: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, ServiceError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| invalid(format!("{key}: {e}"))))
        .transpose()
}

fn list(params: &BTreeMap<String, String>, key: &str) -> Option<Vec<String>> {
    params.get(key).map(|v| {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    })
}

fn scope(params: &BTreeMap<String, String>) -> Result<Scope, ServiceError> {
    match (
        list(params, "scope"),
        parse::<Interaction>(params, "group")?,
    ) {
        (Some(_), Some(_)) => Err(invalid("give either `scope` or `group`, not both")),
        (Some(ids), None) => Ok(Scope::Ids(ids)),
        (None, Some(g)) => Ok(Scope::Group(g)),
        (None, None) => Ok(Scope::All),
    }
}

fn heat_mode(params: &BTreeMap<String, String>) -> Result<Option<HeatMode>, ServiceError> {
    match params.get("heat_mode").map(String::as_str) {
        None | Some("") => Ok(None),
        Some("error") => Ok(Some(HeatMode::Error)),
        Some("template_importance") => Ok(Some(HeatMode::TemplateImportance)),
        Some(other) => Err(invalid(format!(
            "heat_mode `{other}` is not `error` or `template_importance`"
        ))),
    }
}

fn range(params: &BTreeMap<String, String>, key: &str) -> Result<Option<[f64; 2]>, ServiceError> {
    let Some(v) = params.get(key) else {
        return Ok(None);
    };
    let parts: Vec<&str> = v.split(',').collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match nums {
        Ok(n) if n.len() == 2 => Ok(Some([n[0], n[1]])),
        _ => Err(invalid(format!("{key} must be `lo,hi`"))),
    }
}

impl ViewRequest {
    /// Builds a request from flat string parameters, as found in a URL
    /// query string or `export` flags.
    pub fn from_params(
        view: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<Self, ServiceError> {
        Ok(match view {
            "summary" => ViewRequest::Summary,
            "metrics" => ViewRequest::Metrics,
            "meta" => ViewRequest::Meta,
            "group" => {
                let label = parse::<Interaction>(params, "label")?
                    .ok_or_else(|| invalid("group view needs `label`"))?;
                let mut importance = BTreeMap::new();
                for m in Modality::ALL {
                    if let Some(r) = range(params, &format!("importance_{}", m.as_str()))? {
                        importance.insert(m, r);
                    }
                }
                ViewRequest::Group(BrushQuery {
                    label,
                    start: parse(params, "start")?,
                    end: parse(params, "end")?,
                    importance,
                    prediction: range(params, "prediction")?,
                })
            }
            "templates" => ViewRequest::Templates {
                scope: scope(params)?,
                sort: parse(params, "sort")?,
                min_support: parse(params, "min_support")?,
            },
            "projection" => ViewRequest::Projection {
                modality: parse(params, "modality")?
                    .ok_or_else(|| invalid("projection needs `modality`"))?,
                scope: scope(params)?,
                heat_mode: heat_mode(params)?,
                template: list(params, "template")
                    .map(|items| {
                        items
                            .iter()
                            .map(|i| {
                                i.parse::<Item>()
                                    .map_err(|e| invalid(format!("template: {e}")))
                            })
                            .collect()
                    })
                    .transpose()?,
            },
            "instance" => ViewRequest::Instance {
                id: params
                    .get("id")
                    .cloned()
                    .ok_or_else(|| invalid("instance view needs `id`"))?,
                k: parse(params, "k")?.unwrap_or(DEFAULT_TOP_K),
            },
            other => {
                return Err(invalid(format!(
                    "unknown view `{other}`; expected one of {}",
                    VIEWS.join(", ")
                )))
            }
        })
    }
}

fn resolve(service: &AnalysisService, scope: &Scope) -> Result<Option<Vec<String>>, ServiceError> {
    Ok(match scope {
        Scope::All => None,
        Scope::Ids(ids) => Some(ids.clone()),
        Scope::Group(label) => Some(
            service
                .query_group(&BrushQuery {
                    label: *label,
                    start: None,
                    end: None,
                    importance: BTreeMap::new(),
                    prediction: None,
                })?
                .ids,
        ),
    })
}

/// Response body for `req`.
pub fn respond(service: &AnalysisService, req: &ViewRequest) -> Result<Vec<u8>, ServiceError> {
    Ok(match req {
        ViewRequest::Summary => render(&service.summary()?),
        ViewRequest::Group(q) => render(&service.query_group(q)?),
        ViewRequest::Templates {
            scope,
            sort,
            min_support,
        } => {
            let q = TemplateQuery {
                scope: resolve(service, scope)?,
                sort: *sort,
                min_support: *min_support,
            };
            render(&*service.templates(&q)?)
        }
        ViewRequest::Projection {
            modality,
            scope,
            heat_mode,
            template,
        } => {
            let q = ProjectionQuery {
                scope: resolve(service, scope)?,
                heat_mode: *heat_mode,
                template: template.clone(),
            };
            render(&service.projection(*modality, &q)?)
        }
        ViewRequest::Instance { id, k } => render(&service.instance(id, *k)?),
        ViewRequest::Metrics => render(&service.metrics()?),
        ViewRequest::Meta => render(&service.meta()?),
    })
}
