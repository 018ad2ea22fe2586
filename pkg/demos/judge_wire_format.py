"""
Talking to a judge
==================

Judges reply in plain text. The reply formats are fixed by the prompt
templates, and a parser turns each reply into a number or raises with
the raw text attached.
"""

from grpo_vqa.judge import (
    MockJudge,
    NoScoreFound,
    ScriptedJudge,
    load_prompt,
    parse_five_level,
    parse_similarity_response,
    reasoning_prompt,
)

prompt = reasoning_prompt()
print(prompt.system.splitlines()[0])
print(prompt.render(gen_text="the mug is on the shelf", ref_text="a mug sits on the top shelf"))

for reply in ("Similarity score: 0.82", "similarity score:  1.3", "They look alike."):
    try:
        print(repr(reply), "->", parse_similarity_response(reply))
    except NoScoreFound as err:
        print(repr(reply), "-> no score:", err)

# the mock judge scores by word overlap but answers in the real format
mock = MockJudge()
print(mock.complete(prompt, {"gen_text": "the mug is on the shelf", "ref_text": "a mug sits on the top shelf"}))

# scripted replies replay a conversation, handy for exercising parsers
quality = load_prompt("quality_five_level")
fields = dict(question="q", reference_reasoning="r", candidate_reasoning="c", reference_answer="a", candidate_answer="b")
scripted = ScriptedJudge("REASONING_SCORE: 4\nANSWER_SCORE: 5")
print(scripted.ask(quality, fields, parse_five_level).value)
