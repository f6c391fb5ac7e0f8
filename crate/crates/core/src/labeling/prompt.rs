use super::LabelError;

/// Relation-labeling prompt. `{A1}` is the agent label, `{A2}` the patient
/// label and `{tweet}` the original-language tweet text.
pub const PROMPT_TEMPLATE: &str = concat!(
    "You are an expert political analyst. In the following tweet, the author expresses a relation from \"{A1}\" to \"{A2}\". ",
    "Provide a description of the relation in English in max. 3 words. Determine whether the relation is supportive, conflictive or neutral for \"{A2}\".\n",
    "\n",
    "Definition of relation types:\n",
    "Supportive relations include relations where \"{A1}\" approves of, causes, cares for, contributes to, helps, approves of, or creates \"{A2}\".\n",
    "Conflictive relations include relations where \"{A1}\" disapproves of, attacks, betrays, prevents or reduces \"{A2}\".\n",
    "A neutral relation applies when the connection is only evoked in reported or direct speech, or when the implied relation is neither supportive nor conflictive.\n",
    "\n",
    "Do NOT determine the relation type based on general knowledge \u{2014} only use what is stated in the sentence.\n",
    "\n",
    "TWEET: {tweet}",
);

/// Fills the template in a single pass, so placeholder-like text inside the
/// arguments is never substituted again.
pub fn build_prompt(a1: &str, a2: &str, tweet: &str) -> Result<String, LabelError> {
    for (name, value) in [("a1", a1), ("a2", a2), ("tweet", tweet)] {
        if value.trim().is_empty() {
            return Err(LabelError::EmptyArgument(name));
        }
    }
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + 3 * a1.len() + 4 * a2.len() + tweet.len());
    let mut rest = PROMPT_TEMPLATE;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let (value, skip) = if tail.starts_with("{A1}") {
            (a1, 4)
        } else if tail.starts_with("{A2}") {
            (a2, 4)
        } else if tail.starts_with("{tweet}") {
            (tweet, 7)
        } else {
            ("{", 1)
        };
        out.push_str(value);
        rest = &tail[skip..];
    }
    out.push_str(rest);
    Ok(out)
}
