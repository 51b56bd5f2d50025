//! Sources of child forms: a scripted operator sampler and an HTTP client
//! for an external planner.

use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{DeadEnd, MemoryRecord};
use super::operators::{self, strategy_tags, OperatorKind};
use crate::error::{Result, XcError};
use crate::forms::{Channel, FunctionalForm};

pub const DEFAULT_TASK_TEXT: &str = "\
You are improving a semi-local exchange-correlation functional. The parent form is a JSON document \
with enhancement factors for exchange (gx), same-spin correlation (gss) and opposite-spin \
correlation (gos), each an expression over dimensionless density descriptors, plus a parameter \
vector and a mask marking which parameters are fitted. Your child form is fitted on the training \
reactions and scored by its validation WRMSD relative to a target. Each violated physical \
constraint costs a factor of 0.9; the checks cover spin-swap symmetry, the uniform electron gas \
limit of exchange, uniform coordinate scaling of exchange, and agreement of proxy atomization \
energies between a coarse and a fine quadrature grid. Make one focused change. New terms should \
start at values that leave the parent's predictions untouched. Do not retry strategies listed as \
dead ends. Reply with JSON holding plan_text and form_document.";

/// What the external planner receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub task_text: String,
    pub parent_forms: Vec<FunctionalForm>,
    pub lineage_records: Vec<MemoryRecord>,
    pub dead_ends: Vec<DeadEnd>,
}

/// What the external planner returns. `form_document` may be a JSON
/// object or a string holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerResponse {
    pub plan_text: String,
    pub form_document: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

impl ProposerResponse {
    pub fn form(&self) -> Result<FunctionalForm> {
        let form = match &self.form_document {
            serde_json::Value::String(s) => FunctionalForm::from_json(s)?,
            v => FunctionalForm::from_json(&v.to_string())?,
        };
        form.validate()?;
        Ok(form)
    }
}

/// Inputs to one proposal.
#[derive(Debug, Clone)]
pub struct ProposalContext<'a> {
    pub iteration: usize,
    pub parent: &'a FunctionalForm,
    pub donor: Option<&'a FunctionalForm>,
    pub lineage: Vec<MemoryRecord>,
    pub dead_ends: Vec<DeadEnd>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub form: FunctionalForm,
    pub plan_text: String,
    /// Operator name, or the external strategy label.
    pub proposer_tag: String,
    pub strategy_tags: Vec<String>,
    pub used_donor: bool,
    /// Operators drawn and rejected before this one.
    pub resampled: Vec<String>,
}

pub trait Proposer {
    fn name(&self) -> &str;
    fn propose(&mut self, ctx: &ProposalContext<'_>, rng: &mut ChaCha8Rng) -> Result<Proposal>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorWeight {
    pub operator: OperatorKind,
    pub weight: f64,
}

pub fn default_operator_weights() -> Vec<OperatorWeight> {
    use OperatorKind::*;
    [
        (ZeroInitGraft, 3.0),
        (BoundedAdd, 2.0),
        (RationalWrap, 1.0),
        (SigmoidGate, 1.0),
        (Fusion, 1.0),
        (Perturbation, 1.0),
        (FreezeGraft, 1.0),
    ]
    .into_iter()
    .map(|(operator, weight)| OperatorWeight { operator, weight })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedProposer {
    pub operators: Vec<OperatorWeight>,
    pub perturbation_scale: f64,
    /// Children with more parameters than this are rejected.
    pub max_params: usize,
    pub max_draws: usize,
}

impl Default for ScriptedProposer {
    fn default() -> Self {
        ScriptedProposer {
            operators: default_operator_weights(),
            perturbation_scale: 0.1,
            max_params: 40,
            max_draws: 32,
        }
    }
}

impl ScriptedProposer {
    pub fn validate(&self) -> Result<()> {
        if self.operators.is_empty() {
            return Err(XcError::validation("operators", "registry is empty"));
        }
        if self.operators.iter().any(|o| !(o.weight >= 0.0) || !o.weight.is_finite())
            || !(self.operators.iter().map(|o| o.weight).sum::<f64>() > 0.0)
        {
            return Err(XcError::validation("operators", "weights must be nonnegative with a positive sum"));
        }
        if self.max_draws == 0 {
            return Err(XcError::validation("max_draws", "must be positive"));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> OperatorKind {
        let total: f64 = self.operators.iter().map(|o| o.weight).sum();
        let mut u = rng.random_range(0.0..total);
        for o in &self.operators {
            if u < o.weight {
                return o.operator;
            }
            u -= o.weight;
        }
        self.operators.iter().rev().find(|o| o.weight > 0.0).expect("positive weight").operator
    }
}

impl Proposer for ScriptedProposer {
    fn name(&self) -> &str {
        "scripted"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>, rng: &mut ChaCha8Rng) -> Result<Proposal> {
        self.validate()?;
        let mut resampled = Vec::new();
        for _ in 0..self.max_draws {
            let op = self.draw(rng);
            let channel = Channel::ALL[rng.random_range(0..3)];
            let tags = strategy_tags(op, channel);
            if let Some(d) = ctx.dead_ends.iter().find(|d| tags.contains(&d.tag)) {
                log::debug!("iteration {}: skipping dead end {}", ctx.iteration, d.tag);
                resampled.push(tags[1].clone());
                continue;
            }
            let app = match operators::apply(op, ctx.parent, ctx.donor, channel, self.perturbation_scale, rng) {
                Ok(a) => a,
                Err(e) => {
                    log::debug!("iteration {}: {} inapplicable: {e}", ctx.iteration, tags[1]);
                    resampled.push(tags[1].clone());
                    continue;
                }
            };
            if app.form.n_params() > self.max_params {
                log::debug!("iteration {}: {} exceeds {} parameters", ctx.iteration, tags[1], self.max_params);
                resampled.push(tags[1].clone());
                continue;
            }
            return Ok(Proposal {
                strategy_tags: app.tags(),
                proposer_tag: op.name().to_string(),
                used_donor: app.uses_second_parent,
                plan_text: app.plan,
                form: app.form,
                resampled,
            });
        }
        Err(XcError::Proposer(format!(
            "no applicable operator after {} draws",
            self.max_draws
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub url: String,
    pub timeout_secs: f64,
    pub retries: usize,
    pub task_text: String,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            url: String::new(),
            timeout_secs: 60.0,
            retries: 2,
            task_text: DEFAULT_TASK_TEXT.to_string(),
        }
    }
}

impl HttpSettings {
    pub fn new(url: impl Into<String>) -> Self {
        HttpSettings {
            url: url.into(),
            ..Default::default()
        }
    }
}

/// Posts a [`ProposerRequest`] and parses a [`ProposerResponse`].
pub struct HttpProposer {
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl HttpProposer {
    pub fn new(settings: HttpSettings) -> Result<Self> {
        if settings.url.is_empty() {
            return Err(XcError::validation("url", "proposer URL is empty"));
        }
        if !(settings.timeout_secs > 0.0) || !settings.timeout_secs.is_finite() {
            return Err(XcError::validation("timeout_secs", "must be positive"));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_secs)))
            .build()
            .into();
        Ok(HttpProposer { settings, agent })
    }

    fn post(&self, request: &ProposerRequest) -> Result<ProposerResponse> {
        let mut resp = self
            .agent
            .post(&self.settings.url)
            .send_json(request)
            .map_err(|e| XcError::Proposer(format!("{}: {e}", self.settings.url)))?;
        resp.body_mut()
            .read_json::<ProposerResponse>()
            .map_err(|e| XcError::Proposer(format!("bad response from {}: {e}", self.settings.url)))
    }
}

impl Proposer for HttpProposer {
    fn name(&self) -> &str {
        "external"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Proposal> {
        let mut parent_forms = vec![ctx.parent.clone()];
        parent_forms.extend(ctx.donor.cloned());
        let request = ProposerRequest {
            task_text: self.settings.task_text.clone(),
            parent_forms,
            lineage_records: ctx.lineage.clone(),
            dead_ends: ctx.dead_ends.clone(),
        };
        let mut last = None;
        for attempt in 0..=self.settings.retries {
            match self.post(&request).and_then(|r| Ok((r.form()?, r))) {
                Ok((form, r)) => {
                    let tag = r.strategy.clone().unwrap_or_else(|| "external".into());
                    return Ok(Proposal {
                        form,
                        plan_text: r.plan_text,
                        strategy_tags: vec![tag.clone()],
                        proposer_tag: tag,
                        used_donor: false,
                        resampled: Vec::new(),
                    });
                }
                Err(e) => {
                    log::warn!("proposer attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::canonical_baseline;
    use rand::SeedableRng;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn ctx(parent: &FunctionalForm) -> ProposalContext<'_> {
        ProposalContext {
            iteration: 1,
            parent,
            donor: None,
            lineage: Vec::new(),
            dead_ends: Vec::new(),
        }
    }

    #[test]
    fn scripted_never_returns_fusion_without_donor() {
        let parent = canonical_baseline();
        let mut p = ScriptedProposer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let prop = p.propose(&ctx(&parent), &mut rng).unwrap();
            assert_ne!(prop.proposer_tag, "fusion");
            prop.form.validate().unwrap();
        }
    }

    #[test]
    fn scripted_avoids_dead_ends() {
        let parent = canonical_baseline();
        let mut p = ScriptedProposer {
            operators: vec![
                OperatorWeight {
                    operator: OperatorKind::BoundedAdd,
                    weight: 1.0,
                },
                OperatorWeight {
                    operator: OperatorKind::Perturbation,
                    weight: 1.0,
                },
            ],
            ..Default::default()
        };
        let mut c = ctx(&parent);
        c.dead_ends = vec![DeadEnd {
            tag: "bounded_add".into(),
            attempts: 5,
            cause: "ueg_limit".into(),
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(p.propose(&c, &mut rng).unwrap().proposer_tag, "perturbation");
        }
    }

    #[test]
    fn scripted_errors_when_nothing_applies() {
        let parent = canonical_baseline();
        let mut p = ScriptedProposer {
            operators: vec![OperatorWeight {
                operator: OperatorKind::Fusion,
                weight: 1.0,
            }],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(p.propose(&ctx(&parent), &mut rng), Err(XcError::Proposer(_))));
    }

    fn serve_once(body: String) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/propose", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            )
            .unwrap();
            String::from_utf8(req).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn http_round_trip_with_string_document() {
        let child = canonical_baseline();
        let body = serde_json::json!({
            "plan_text": "keep it",
            "form_document": child.to_json().unwrap(),
            "strategy": "identity",
        })
        .to_string();
        let (url, handle) = serve_once(body);
        let mut p = HttpProposer::new(HttpSettings {
            retries: 0,
            timeout_secs: 10.0,
            ..HttpSettings::new(url)
        })
        .unwrap();
        let parent = canonical_baseline();
        let prop = p.propose(&ctx(&parent), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(prop.form, child);
        assert_eq!(prop.proposer_tag, "identity");
        let sent: ProposerRequest = serde_json::from_str(&handle.join().unwrap()).unwrap();
        assert_eq!(sent.parent_forms, vec![parent]);
        assert_eq!(sent.task_text, DEFAULT_TASK_TEXT);
    }

    #[test]
    fn http_rejects_invalid_form() {
        let body = serde_json::json!({"plan_text": "x", "form_document": {"label": 3}}).to_string();
        let (url, handle) = serve_once(body);
        let mut p = HttpProposer::new(HttpSettings {
            retries: 0,
            ..HttpSettings::new(url)
        })
        .unwrap();
        let parent = canonical_baseline();
        assert!(p.propose(&ctx(&parent), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        handle.join().unwrap();
    }

    #[test]
    fn unreachable_server_is_a_proposer_error() {
        let url = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}/", l.local_addr().unwrap())
        };
        let mut p = HttpProposer::new(HttpSettings {
            retries: 1,
            timeout_secs: 2.0,
            ..HttpSettings::new(url)
        })
        .unwrap();
        let parent = canonical_baseline();
        let err = p.propose(&ctx(&parent), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, XcError::Proposer(_)));
    }
}
