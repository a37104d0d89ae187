//! Synthetic post inventory: sickness and death templates with their fill
//! words, and the complete social-isolation posts.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{Post, SynthKind};
use crate::textfeat::tokenize;

pub const SICKNESS_TEMPLATES: [&str; 6] = [
    "The doctor told me I have {}",
    "I was at the hospital earlier and I have {}.",
    "I got diagnosed with {} last week.",
    "Have anyone here dealt with {}? I just got diagnosed.",
    "How should I handle a {} diagnosis?",
    "How do I tell my parents I have {}?",
];

pub const SICKNESS_WORDS: [&str; 9] = [
    "cancer",
    "leukemia",
    "HIV",
    "AIDS",
    "Diabetes",
    "lung cancer",
    "stomach cancer",
    "skin cancer",
    "parkinson's",
];

pub const ISOLATION_POSTS: [&str; 10] = [
    "My friends stopped talking to me.",
    "My wife just left me.",
    "My parents kicked me out of the house today.",
    "I feel so alone, my last friend said they needed to stop seeing me.",
    "My partner decided that we shouldn't talk anymore last night.",
    "My folks just cut me off, they won't talk to me anymore.",
    "I just got a message from my brother that said he can't talk to me anymore. He was my last contact in my family.",
    "My last friend at work quit, now there's no one I talk to regularly.",
    "I tried calling my Mom but she didn't pick up the phone. I think my parents may be done with me.",
    "I got home today and my partner was packing up to leave. Our apartment feels so empty now.",
];

pub const DEATH_TEMPLATES: [&str; 8] = [
    "My {} just died",
    "I just found out my {} died",
    "My {} died last weekend",
    "What do you do when your {} dies? This happened to me.",
    "Has anyone else had a {} die recently?",
    "I lost my {} yesterday.",
    "My {} passed away recently.",
    "I am in shock. My {} is gone.",
];

pub const DEATH_WORDS: [&str; 15] = [
    "Mom",
    "Mother",
    "Mama",
    "Father",
    "Dad",
    "Papa",
    "Brother",
    "Wife",
    "girlfriend",
    "partner",
    "spouse",
    "husband",
    "son",
    "daughter",
    "best friend",
];

fn fill(template: &str, word: &str) -> String {
    template.replacen("{}", word, 1)
}

/// The single sickness post used wherever a fixed post is required.
pub fn fixed_sickness_text() -> String {
    fill(SICKNESS_TEMPLATES[0], SICKNESS_WORDS[0])
}

/// Number of distinct posts of `kind`.
pub fn support_size(kind: SynthKind) -> usize {
    match kind {
        SynthKind::Sickness => SICKNESS_TEMPLATES.len() * SICKNESS_WORDS.len(),
        SynthKind::Isolation => ISOLATION_POSTS.len(),
        SynthKind::Death => DEATH_TEMPLATES.len() * DEATH_WORDS.len(),
    }
}

/// Every distinct post text of `kind`.
pub fn support(kind: SynthKind) -> Vec<String> {
    match kind {
        SynthKind::Sickness => SICKNESS_TEMPLATES
            .iter()
            .flat_map(|t| SICKNESS_WORDS.iter().map(move |w| fill(t, w)))
            .collect(),
        SynthKind::Isolation => ISOLATION_POSTS.iter().map(|s| s.to_string()).collect(),
        SynthKind::Death => DEATH_TEMPLATES
            .iter()
            .flat_map(|t| DEATH_WORDS.iter().map(move |w| fill(t, w)))
            .collect(),
    }
}

/// Draws a uniformly random post of `kind`.
pub fn sample_post<R: Rng + ?Sized>(kind: SynthKind, rng: &mut R) -> Post {
    let text = match kind {
        SynthKind::Sickness => {
            let t = SICKNESS_TEMPLATES[rng.random_range(0..SICKNESS_TEMPLATES.len())];
            fill(t, SICKNESS_WORDS[rng.random_range(0..SICKNESS_WORDS.len())])
        }
        SynthKind::Isolation => ISOLATION_POSTS[rng.random_range(0..ISOLATION_POSTS.len())].to_string(),
        SynthKind::Death => {
            let t = DEATH_TEMPLATES[rng.random_range(0..DEATH_TEMPLATES.len())];
            fill(t, DEATH_WORDS[rng.random_range(0..DEATH_WORDS.len())])
        }
    };
    Post::synthetic(text, kind)
}

/// Draws uniformly from the union of the supports of `kinds`.
pub fn sample_post_from<R: Rng + ?Sized>(kinds: &[SynthKind], rng: &mut R) -> Post {
    let total: usize = kinds.iter().map(|&k| support_size(k)).sum();
    let mut pick = rng.random_range(0..total);
    for &k in kinds {
        let n = support_size(k);
        if pick < n {
            return sample_post(k, rng);
        }
        pick -= n;
    }
    unreachable!("pick < total")
}

/// All tokens that occur in any synthetic post.
pub fn template_token_set() -> BTreeSet<String> {
    SynthKind::ALL
        .iter()
        .flat_map(|&k| support(k))
        .flat_map(|text| tokenize(&text).into_tokens())
        .collect()
}
