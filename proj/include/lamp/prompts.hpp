#pragma once

// Versioned prompt templates for instruction backtranslation, venue-styled
// response generation, span detection and category-specific rewriting.
// Changing any text here changes request hashes, so recorded fixtures must be
// re-recorded and kPromptVersion bumped.

#include <string_view>

namespace lamp::prompts {

inline constexpr std::string_view kPromptVersion = "lamp-prompts/1";

inline constexpr std::string_view kParagraphSlot = "{{paragraph}}";
inline constexpr std::string_view kInstructionSlot = "{{instruction}}";
inline constexpr std::string_view kCountSlot = "{{n}}";

inline constexpr std::string_view kBacktranslateQuestion =
    "Summarize this paragraph into a single sentence open-ended question.\n{{paragraph}}";

inline constexpr std::string_view kBacktranslateInstruction =
    "Summarize this paragraph into a single sentence open-ended instruction.\n{{paragraph}}";

// The persona is spliced into kResponseTemplate at {{persona}}.
inline constexpr std::string_view kPersonaSlot = "{{persona}}";

inline constexpr std::string_view kResponseTemplate =
    "Imagine you are a {{persona}}. Now write a paragraph (10-15 sentence) as a response to the "
    "following question. Try your best to be original, avoiding clichés or overused tropes. Do not "
    "use ornamental language and focus on nuance, simplicity, and subtext. Start directly with your "
    "response.\n{{instruction}}";

inline constexpr std::string_view kPersonaNewYorker = "fiction writer for the NewYorker";
inline constexpr std::string_view kPersonaModernLove = "writer for the New York Times Modern Love section";
inline constexpr std::string_view kPersonaCooking = "writer for the New York Times Cooking section";
inline constexpr std::string_view kPersonaTravel = "writer for the New York Times Travel section";
inline constexpr std::string_view kPersonaAdvice =
    "beloved female Internet advice columnist whose trademark is deeply felt and frank responses "
    "grounded in your own personal experience";

// ---- detection -----------------------------------------------------------------

inline constexpr std::string_view kDetectionHeader =
    "You are given a paragraph of writing, and your goal is to provide feedback by selecting spans of "
    "text in the writing that could be improved and assign each problematic span to an error "
    "category. Below, we list the 7 error categories that you can choose from.\n"
    "You are also provided {{n}} examples of paragraphs that were annotated by professional writers, "
    "which you can use to better understand the task and the error categories.\n";

inline constexpr std::string_view kDetectionCategories =
    "Error Categories:\n"
    "- \"Awkward Word Choice and Phrasing\": Suggestions for better word choices or more precise "
    "phrasing to enhance clarity and readability.\n"
    "- \"Cliche\": The use of hackneyed phrases or overly common imagery that lacks originality or "
    "depth.\n"
    "- \"Poor Sentence Structure\": Feedback on the construction of sentences, recommending changes "
    "for better flow, clarity, or impact.\n"
    "- \"Unnecessary/Redundant Exposition\": Redundant or non-essential parts of the text that could "
    "be removed/rephrased for conciseness.\n"
    "- \"Lack of Specificity and Detail\": Need for more concrete details or specific information to "
    "enrich the text and make it more engaging.\n"
    "- \"Purple Prose\": Identifying parts of the text that are seen as unnecessary ornamental and "
    "overly verbose.\n"
    "- \"Tense Consistency\": Comments pointing out inconsistencies in verb tense that need to be "
    "addressed for uniformity.\n";

inline constexpr std::string_view kDetectionRules =
    "Rules:\n"
    "- Number of Spans -- You can provide feedback on multiple spans, and multiple spans can have the "
    "same category.\n"
    "- Span must be verbatim -- The span you select must be verbatim from the paragraph, otherwise, "
    "the feedback will not be provided to the user.\n"
    "- No Overlap -- Spans should not overlap, and one span should not include the other.\n"
    "- Single Category -- Each span should have exactly one category from the categories listed "
    "above.\n"
    "Output a JSON list of objects with the keys \"span\" and \"category\", as in the examples.\n";

// ---- rewriting -------------------------------------------------------------------

inline constexpr std::string_view kRewriteCoherence =
    "**IT IS VERY IMPORTANT TO MAKE SURE THAT YOUR EDITED TEXT ONCE ADDED TO THE PARAGRAPH READS "
    "COHERENTLY AND GRAMMATICALLY CORRECT. For instance if you replace text within <span></span> tags "
    "with a longer span; please make sure the following text after the edit, is its continuation. "
    "Simple way to ensure this is to make sure that the edited span has the same casing and "
    "punctuation at the beginning and end as that of the original span.\n\n"
    "PLEASE FOLLOW THE OUTPUT SCHEMA AS THE EXAMPLES BELOW AND DO NOT RETURN ANYTHING OTHER THAN THE "
    "EDITED SPAN WITHIN QUOTES\n";

inline constexpr std::string_view kRewriteCliche =
    "A cliché is a saying, idea, or element of an artistic work that has become overused to the point "
    "of losing its original meaning or effect, even to the point of being weird, irritating, or bland\n\n"
    "You will be given example of {{n}} paragraphs with spans that count as Cliche and suggested edits "
    "that either **REWRITES THE CLICHE or SIMPLY REMOVES IT**.\n\n"
    "Your task will then be to suggest edits (either spans or empty string) that gets rid of the "
    "cliche while making the resulting paragraph coherent, given a new paragraph and highlighted span "
    "of Cliche from it. Do not simply paraphrase or use fancy ornamental language; Try to keep each "
    "sentence short. Look at the examples carefully\n\n";

inline constexpr std::string_view kRewritePoorSentenceStructure =
    "Poor sentence structure refers to writing that is difficult to understand or lacks clarity due to "
    "issues with how sentences are constructed. It encompasses issues like run-on sentences, "
    "fragments, misplaced or dangling modifiers, lack of variety, overuse of passive voice, improper "
    "parallelism, and unclear pronoun references, all of which impede clear communication and reader "
    "comprehension\n\n"
    "You will be given examples of {{n}} paragraphs with text within <span></span> tags that shows "
    "poor sentence structure and suggested edits that either **REWRITES WITH IMPROVED SENTENCE "
    "STRUCTURE**.\n\n"
    "Your task will then be to suggest edits that rewrite the text within the span tags with better "
    "sentence structure while making the resulting paragraph coherent, given a new paragraph and "
    "highlighted span of poor sentence structure from it. Do not use fancy ornamental language; Look "
    "at the examples carefully and do not output anything after closing quotes.\n\n";

inline constexpr std::string_view kRewriteUnnecessaryExposition =
    "Unnecessary or redundant exposition in writing refers to providing excessive explanatory "
    "information that doesn't contribute meaningfully to the story, characters, or overall "
    "narrative.\n\n"
    "You will be given example of {{n}} paragraphs with text within <span></span> tags that count as "
    "unnecessary/redundant exposition and suggested edits that either **REWRITES IT IN FEWER WORDS or "
    "SIMPLY REMOVES IT**.\n\n"
    "Your task will then be to suggest edits that rewrites the text within the span tags correcting "
    "the unnecessary/redundant exposition while making the resulting paragraph coherent, given a new "
    "paragraph and highlighted text within of unnecessary/redundant exposition. Do not simply "
    "paraphrase or use fancy ornamental language or repeat the same thing in the edited span; Look at "
    "the examples carefully.\n\n";

inline constexpr std::string_view kRewriteLackOfSpecificity =
    "Lack of Specificity and Detail in writing refers to the absence of concrete and specific "
    "information, which can make the text feel vague and unengaging. The need for more concrete "
    "details or specific information is crucial to enrich the text and make it more engaging. "
    "Specificity helps to create vivid imagery, provides clarity, and connects with the reader on a "
    "deeper level.\n\n"
    "You will be given example of {{n}} paragraphs with text within <span></span> tags that lacks "
    "specificity and detail and suggested edits that either **REWRITES WITH SPECIFICITY AND "
    "DETAIL**.\n\n"
    "Your task will then be to suggest edits that rewrites the text within the span tags with "
    "specificity and detail that is engaging while making the resulting paragraph coherent, given a "
    "new paragraph and highlighted span of lack of specificity and detail from it. Do not simply "
    "paraphrase or use fancy ornamental language; Look at the examples carefully and do not output "
    "anything after closing quotes.\n\n";

inline constexpr std::string_view kRewritePurpleProse =
    "In literary criticism, purple prose is overly ornate prose text that may disrupt a narrative flow "
    "by drawing undesirable attention to its own extravagant style of writing, thereby diminishing the "
    "appreciation of the prose overall. Purple prose is characterized by the excessive use of "
    "adjectives, adverbs, and metaphors.\n\n"
    "You will be given example of {{n}} paragraphs with text within <span></span> tags that has purple "
    "prose in it and suggested edits that either **REWRITES THEM WITH SIMPLER WORDS OR REMOVES "
    "IT**.\n\n"
    "Your task will then be to suggest edits that rewrites the text within the span tags altering the "
    "purple prose while making the resulting paragraph coherent, given a new paragraph and highlighted "
    "span of purple prose from it. Do not simply paraphrase or use fancy ornamental language; Look at "
    "the examples carefully and do not output anything after closing quotes.\n\n";

inline constexpr std::string_view kRewriteAwkwardWordChoice =
    "Awkward word choice and phrasing refers to words or expressions that are imprecise, unidiomatic, "
    "or needlessly elaborate for what they say, so that the reader stumbles over them instead of "
    "following the meaning.\n\n"
    "You will be given example of {{n}} paragraphs with text within <span></span> tags that shows "
    "awkward word choice or phrasing and suggested edits that either **REPLACES IT WITH A MORE PRECISE "
    "WORD OR PHRASE or SIMPLY REMOVES IT**.\n\n"
    "Your task will then be to suggest edits that rewrite the text within the span tags with clearer, "
    "more precise wording while making the resulting paragraph coherent, given a new paragraph and "
    "highlighted span of awkward word choice or phrasing from it. Do not simply paraphrase or use "
    "fancy ornamental language; Look at the examples carefully and do not output anything after "
    "closing quotes.\n\n";

inline constexpr std::string_view kRewriteTenseConsistency =
    "Tense inconsistency refers to shifts in verb tense within a passage that are not motivated by a "
    "change in time, which confuse the reader about when events take place.\n\n"
    "You will be given example of {{n}} paragraphs with text within <span></span> tags that contain a "
    "tense inconsistency and suggested edits that **REWRITES IT IN THE TENSE OF THE SURROUNDING "
    "TEXT**.\n\n"
    "Your task will then be to suggest edits that rewrite the text within the span tags so that its "
    "verb tense agrees with the rest of the paragraph, given a new paragraph and highlighted span of "
    "tense inconsistency from it. Change as little as possible besides the tense; Look at the "
    "examples carefully and do not output anything after closing quotes.\n\n";

}  // namespace lamp::prompts
