//! Remote language-model proposer: renders a prompt template per stage,
//! posts it to a configured endpoint, and parses the line-oriented triple
//! reply into the same stage output types as the rule-based proposer. The
//! pipeline's validation gate rejects ungrounded output and retries.

use std::collections::BTreeSet;
use std::time::Duration;

use super::{
    atom_from_triple, GoalSpec, Inventory, Lexicon, Proposer, SynthesisError, TaskDescription,
};
use crate::kg::Triple;
use crate::pddl::GroundAtom;

/// Prompt bodies with `{task}`, `{objects}`, `{graph}`, `{examples}` (and
/// stage-specific) placeholders, mirroring the contextual-examples /
/// scenario-definition / spatial-data / output-constraints structure.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub goal: String,
    pub relation: String,
    pub property: String,
    pub reach: String,
    pub replan: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            goal: include_str!("../../assets/prompts/goal.txt").to_string(),
            relation: include_str!("../../assets/prompts/relation.txt").to_string(),
            property: include_str!("../../assets/prompts/property.txt").to_string(),
            reach: include_str!("../../assets/prompts/reach.txt").to_string(),
            replan: include_str!("../../assets/prompts/replan.txt").to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Env var holding the bearer token, if the endpoint needs one.
    pub auth_token_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080/propose".to_string(),
            auth_token_env: None,
            timeout_secs: 30,
            retries: 3,
        }
    }
}

/// Minimal POST transport, swappable for tests.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, auth: Option<&str>, body: &str, timeout: Duration)
        -> Result<String, SynthesisError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, SynthesisError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| SynthesisError::Transport(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn post(
        &self,
        url: &str,
        auth: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<String, SynthesisError> {
        let mut req = self.client.post(url).timeout(timeout).body(body.to_string());
        if let Some(token) = auth {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| SynthesisError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SynthesisError::Transport(format!("endpoint returned {}", resp.status())));
        }
        resp.text().map_err(|e| SynthesisError::Transport(e.to_string()))
    }
}

pub struct RemoteProposer {
    config: RemoteConfig,
    templates: PromptTemplates,
    transport: Box<dyn Transport>,
}

impl RemoteProposer {
    pub fn new(config: RemoteConfig) -> Result<Self, SynthesisError> {
        Ok(RemoteProposer {
            config,
            templates: PromptTemplates::default(),
            transport: Box::new(HttpTransport::new()?),
        })
    }

    pub fn with_transport(
        config: RemoteConfig,
        templates: PromptTemplates,
        transport: Box<dyn Transport>,
    ) -> Self {
        RemoteProposer { config, templates, transport }
    }

    fn call(&self, prompt: &str) -> Result<String, SynthesisError> {
        let token = self
            .config
            .auth_token_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        self.transport.post(
            &self.config.endpoint,
            token.as_deref(),
            prompt,
            Duration::from_secs(self.config.timeout_secs),
        )
    }
}

fn render(template: &str, fills: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in fills {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn triples_block(triples: &BTreeSet<Triple>) -> String {
    triples
        .iter()
        .map(|t| format!("{} {} {}", t.subject, t.relation, t.object))
        .collect::<Vec<_>>()
        .join("\n")
}

fn atoms_block(atoms: &BTreeSet<GroundAtom>) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("\n")
}

/// Parses `subject relation object` lines into triples; blank lines are
/// skipped, anything else is an invalid proposal.
pub fn parse_triple_lines(text: &str) -> Result<Vec<Triple>, SynthesisError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(SynthesisError::InvalidProposal(format!(
                "expected '<subject> <relation> <object>', got '{line}'"
            )));
        }
        out.push(
            Triple::new(fields[0], fields[1], fields[2])
                .map_err(|e| SynthesisError::InvalidProposal(e.to_string()))?,
        );
    }
    Ok(out)
}

/// Parses `weight subject relation object` lines (the replan reply format).
/// Weights are clamped into (0, 1].
pub fn parse_weighted_lines(text: &str) -> Result<Vec<(f64, Triple)>, SynthesisError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(SynthesisError::InvalidProposal(format!(
                "expected '<weight> <subject> <relation> <object>', got '{line}'"
            )));
        }
        let raw: f64 = fields[0]
            .parse()
            .map_err(|_| SynthesisError::InvalidProposal(format!("bad weight '{}'", fields[0])))?;
        if !raw.is_finite() {
            return Err(SynthesisError::InvalidProposal(format!("bad weight '{}'", fields[0])));
        }
        let weight = raw.clamp(f64::MIN_POSITIVE, 1.0);
        out.push((
            weight,
            Triple::new(fields[1], fields[2], fields[3])
                .map_err(|e| SynthesisError::InvalidProposal(e.to_string()))?,
        ));
    }
    Ok(out)
}

impl RemoteProposer {
    /// Candidate-generation call for the replanner (Eq. 7 shape): returns
    /// weighted single-triple hypotheses.
    pub fn replan_candidates(
        &self,
        k: usize,
        error: &str,
        graph_block: &str,
    ) -> Result<Vec<(f64, Triple)>, SynthesisError> {
        let prompt = render(
            &self.templates.replan,
            &[
                ("k", k.to_string()),
                ("error", error.to_string()),
                ("graph", graph_block.to_string()),
                ("examples", String::new()),
            ],
        );
        let reply = self.call(&prompt)?;
        let mut parsed = parse_weighted_lines(&reply)?;
        parsed.truncate(k);
        Ok(parsed)
    }
}

impl Proposer for RemoteProposer {
    fn goal(
        &self,
        task: &TaskDescription,
        inventory: &Inventory,
        _lexicon: &Lexicon,
    ) -> Result<GoalSpec, SynthesisError> {
        let objects: Vec<String> = inventory
            .entities
            .iter()
            .chain(&inventory.robots)
            .cloned()
            .collect();
        let prompt = render(
            &self.templates.goal,
            &[
                ("task", task.text.clone()),
                ("objects", objects.join(", ")),
                ("examples", String::new()),
            ],
        );
        let reply = self.call(&prompt)?;
        Ok(GoalSpec { goal_triples: parse_triple_lines(&reply)? })
    }

    fn relations(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        g_relation: &BTreeSet<Triple>,
        _inventory: &Inventory,
        _depth: usize,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        let goal_block = goal
            .goal_triples
            .iter()
            .map(|t| format!("{} {} {}", t.subject, t.relation, t.object))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            &self.templates.relation,
            &[
                ("goal", goal_block),
                ("task", task.text.clone()),
                ("graph", triples_block(g_relation)),
                ("examples", String::new()),
            ],
        );
        let reply = self.call(&prompt)?;
        Ok(parse_triple_lines(&reply)?.iter().map(atom_from_triple).collect())
    }

    fn properties(
        &self,
        goal: &GoalSpec,
        task: &TaskDescription,
        relations: &BTreeSet<GroundAtom>,
        g_property: &BTreeSet<Triple>,
        _inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        let goal_block = goal
            .goal_triples
            .iter()
            .map(|t| format!("{} {} {}", t.subject, t.relation, t.object))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            &self.templates.property,
            &[
                ("goal", goal_block),
                ("task", task.text.clone()),
                ("relations", atoms_block(relations)),
                ("graph", triples_block(g_property)),
                ("examples", String::new()),
            ],
        );
        let reply = self.call(&prompt)?;
        Ok(parse_triple_lines(&reply)?.iter().map(atom_from_triple).collect())
    }

    fn reach(
        &self,
        relations: &BTreeSet<GroundAtom>,
        properties: &BTreeSet<GroundAtom>,
        g_reach: &BTreeSet<Triple>,
        _inventory: &Inventory,
    ) -> Result<BTreeSet<GroundAtom>, SynthesisError> {
        let prompt = render(
            &self.templates.reach,
            &[
                ("relations", atoms_block(relations)),
                ("properties", atoms_block(properties)),
                ("graph", triples_block(g_reach)),
                ("examples", String::new()),
            ],
        );
        let reply = self.call(&prompt)?;
        Ok(parse_triple_lines(&reply)?.iter().map(atom_from_triple).collect())
    }

    fn retries(&self) -> usize {
        self.config.retries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Canned transport: pops one reply per call.
    struct MockTransport {
        replies: Mutex<Vec<String>>,
        seen: Mutex<Vec<String>>,
    }

    impl Transport for MockTransport {
        fn post(
            &self,
            _url: &str,
            _auth: Option<&str>,
            body: &str,
            _timeout: Duration,
        ) -> Result<String, SynthesisError> {
            self.seen.lock().unwrap().push(body.to_string());
            let mut replies = self.replies.lock().unwrap();
            if replies.is_empty() {
                Err(SynthesisError::Transport("no more replies".into()))
            } else {
                Ok(replies.remove(0))
            }
        }
    }

    fn proposer_with(replies: Vec<&str>) -> (RemoteProposer, *const MockTransport) {
        let transport = Box::new(MockTransport {
            replies: Mutex::new(replies.into_iter().map(|s| s.to_string()).collect()),
            seen: Mutex::new(Vec::new()),
        });
        let ptr = &*transport as *const MockTransport;
        let proposer = RemoteProposer::with_transport(
            RemoteConfig::default(),
            PromptTemplates::default(),
            transport,
        );
        (proposer, ptr)
    }

    #[test]
    fn goal_reply_parses_to_triples() {
        let (proposer, _) = proposer_with(vec!["watch in drawer\nkeychain in drawer\n"]);
        let task = TaskDescription { text: "put things away".into(), structured_goal: None };
        let inventory = Inventory {
            entities: ["watch", "keychain", "drawer"].iter().map(|s| s.to_string()).collect(),
            robots: Default::default(),
            locations: Default::default(),
        };
        let goal = proposer.goal(&task, &inventory, &Lexicon::default()).unwrap();
        assert_eq!(goal.goal_triples.len(), 2);
        assert_eq!(goal.goal_triples[0], Triple::new("watch", "in", "drawer").unwrap());
    }

    #[test]
    fn prompt_carries_task_and_objects() {
        let (proposer, transport) = proposer_with(vec!["watch in drawer"]);
        let task = TaskDescription { text: "tidy the desk".into(), structured_goal: None };
        let inventory = Inventory {
            entities: ["watch", "drawer"].iter().map(|s| s.to_string()).collect(),
            robots: Default::default(),
            locations: Default::default(),
        };
        proposer.goal(&task, &inventory, &Lexicon::default()).unwrap();
        let seen = unsafe { &*transport }.seen.lock().unwrap();
        assert!(seen[0].contains("tidy the desk"));
        assert!(seen[0].contains("watch, drawer") || seen[0].contains("drawer, watch"));
        assert!(!seen[0].contains("{task}"));
    }

    #[test]
    fn malformed_reply_is_invalid_proposal() {
        let (proposer, _) = proposer_with(vec!["this is not a triple line at all"]);
        let task = TaskDescription { text: "x".into(), structured_goal: None };
        let inventory = Inventory {
            entities: ["x"].iter().map(|s| s.to_string()).collect(),
            robots: Default::default(),
            locations: Default::default(),
        };
        let err = proposer.goal(&task, &inventory, &Lexicon::default()).unwrap_err();
        assert!(matches!(err, SynthesisError::InvalidProposal(_)));
    }

    #[test]
    fn weighted_lines_clamped_into_unit_interval() {
        let parsed = parse_weighted_lines("2.5 drawer has_property openable\n0.4 drawer has_state closed").unwrap();
        assert_eq!(parsed[0].0, 1.0);
        assert_eq!(parsed[1].0, 0.4);
        assert_eq!(parsed[0].1, Triple::new("drawer", "has_property", "openable").unwrap());
    }

    #[test]
    fn http_transport_round_trip_against_local_listener() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let body = "watch in drawer\n";
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        let transport = HttpTransport::new().unwrap();
        let reply = transport
            .post(&format!("http://{addr}/propose"), None, "prompt", Duration::from_secs(5))
            .unwrap();
        assert_eq!(reply, "watch in drawer\n");
        handle.join().unwrap();
    }

    #[test]
    fn replan_candidates_parse_and_truncate() {
        let (proposer, _) = proposer_with(vec![
            "0.6 drawer has_property openable\n0.3 drawer has_state closed\n0.1 watch has_property pickupable",
        ]);
        let got = proposer.replan_candidates(2, "drawer is closed", "").unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, 0.6);
    }
}
