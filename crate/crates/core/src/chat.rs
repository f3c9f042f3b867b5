//! Line-oriented chat with one agent, the human taking the other seat of a
//! dual dialogue. Meant for inspecting prompts and behavior, not evaluation.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::ccd::{appraise, render_ccd_block, SituationTrigger};
use crate::memory::DialogueTurn;
use crate::workflow::{session_id, take_turn, Participant, Simulation, Situation, Transcript, TranscriptTurn, WorkflowType};

pub const HUMAN_SPEAKER: &str = "user";
pub const QUIT_COMMAND: &str = "/quit";

const FRAMING: &str = "You are in a one-to-one conversation. Reply in character to the other person's latest message.";

#[derive(Debug, Clone, PartialEq)]
pub enum ChatReply {
    Turn(TranscriptTurn),
    /// The backend returned nothing.
    Empty,
    /// The turn failed; the session stays usable.
    Error(String),
}

pub struct ChatSession<'a> {
    sim: Simulation<'a>,
    agent: Participant,
    situation: Situation,
    transcript: Transcript,
    seed: u64,
}

impl<'a> ChatSession<'a> {
    pub fn new<I, S>(sim: Simulation<'a>, agent: Participant, tags: I, seed: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids = [HUMAN_SPEAKER.to_owned(), agent.id().to_owned()];
        let transcript = Transcript::new(
            WorkflowType::DualDialogue,
            session_id(WorkflowType::DualDialogue, &[&ids[0], &ids[1]], seed),
            ids.to_vec(),
        );
        Self {
            sim,
            agent,
            situation: Situation::new(FRAMING, tags),
            transcript,
            seed,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn agent(&self) -> &Participant {
        &self.agent
    }

    /// The appraisal block the next agent turn will carry, when CCD is on.
    pub fn ccd_preview(&self) -> Option<String> {
        let ccd = self.agent.ccd.as_ref().filter(|_| self.sim.flags.ccd)?;
        let trigger = SituationTrigger::new(self.situation.text.clone(), self.situation.tags.iter().cloned(), self.situation.intensity);
        let outcome = appraise(ccd, &trigger, &self.agent.stm.emotional_state);
        Some(render_ccd_block(ccd, &outcome))
    }

    pub fn send(&mut self, text: &str) -> ChatReply {
        let index = self.transcript.turns.len();
        let now = self.sim.start + self.sim.turn_interval * index as i32;
        self.transcript.turns.push(TranscriptTurn {
            index,
            speaker: HUMAN_SPEAKER.into(),
            text: text.to_owned(),
            timestamp: now,
            metadata: BTreeMap::new(),
        });
        let turn = DialogueTurn::new(HUMAN_SPEAKER, text, now, 0.5).with_tags(self.situation.tags.iter().cloned());
        if let Err(e) = self.agent.stm.append_turn(turn) {
            return ChatReply::Error(e.to_string());
        }
        let mut seat = [self.agent.clone()];
        let result = take_turn(&self.sim, &mut seat, 0, &self.situation, &mut self.transcript, self.seed);
        let [agent] = seat;
        self.agent = agent;
        match result {
            Ok(true) => ChatReply::Turn(self.transcript.turns.last().expect("turn pushed").clone()),
            Ok(false) => ChatReply::Empty,
            Err(e) => ChatReply::Error(e.to_string()),
        }
    }

    pub fn finish(mut self) -> Transcript {
        self.transcript.complete = true;
        self.transcript
    }
}

/// Reads lines until end of input or `/quit`, echoing replies to `out`.
/// With `debug`, the appraisal block is printed before each agent turn.
pub fn run_repl(session: &mut ChatSession, input: impl BufRead, out: &mut dyn Write, debug: bool) -> io::Result<()> {
    let agent = session.agent().id().to_owned();
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text == QUIT_COMMAND {
            break;
        }
        if text.is_empty() {
            continue;
        }
        if debug {
            if let Some(block) = session.ccd_preview() {
                writeln!(out, "--- ccd ---\n{block}\n-----------")?;
            }
        }
        match session.send(text) {
            ChatReply::Turn(t) => writeln!(out, "{agent}> {}", t.text)?,
            ChatReply::Empty => writeln!(out, "{agent}> (no reply)")?,
            ChatReply::Error(e) => writeln!(out, "[error] {e}")?,
        }
    }
    Ok(())
}
