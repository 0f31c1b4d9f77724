// Prompt templates used for rollout, judging, rewriting and evaluation.
// Text is kept verbatim; {name} marks a placeholder.

#include "csteer/templates.hpp"

namespace csteer {
namespace {

const std::vector<TemplateEntry> kTemplates = {
    {"rollout-image", "INST-IT (IMAGE)",
     R"tpl(<image>
Question: {question}
Prompt:
Task Definition:
You are an expert in image analysis. In this task, you will receive an image, and your task is to answer the given question based on the image content.
# Guidelines and Rules:
- Object References: In the image, each object has a unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[8]") or as [ID1] [ID2] ... for multiple objects, such as "[3] [4] [5]". Avoid commas, ranges, or phrases like "[1, 2, 3]" or "[1] to [3]". The IDs in the images and questions match directly.)tpl"},
    {"rollout-video", "INST-IT (VIDEO)",
     R"tpl(<image>
Question: {question}
Prompt:
Task Definition:
You are an expert in video analysis. In this task, you will receive a series of frames as a video, and your task is to answer the given questions based on the video content.
# Input Format:
There are serveral images inputs as video frames. Each frame can be referenced by its timestamp (indicating when it appears in the video). For example, the first frame can be referred to as <1>.
# Guidelines and Rules:
- Object References: Each object has a unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[8]") or as [ID1] [ID2] ... for multiple objects, such as "[3] [4] [5]". Avoid commas, ranges, or phrases like "[1, 2, 3]" or "[1] to [3]". The IDs in the images and questions match directly.
- Time References: Use timestamps to indicate moments or intervals in the video. For a specific moment, format as <timestamp> (e.g., "at <3>"). For an interval, use <start_timestamp>-<end_timestamp> (e.g., "during <5>-<7>"). Always enclose timestamps in <>.)tpl"},
    {"judge-image", "JUDGE(IMAGE)",
     R"tpl(<image>
Prompt:
# Task Description:
You are an expert evaluator tasked with scoring the accuracy of responses to open-ended questions. You will be provided with a question, a ground-truth answer, and a response from a tester. Your job is to assess the accuracy of the response and provide ONLY a score between 0 and 1.

# Guidelines:
- Score Range: Your score must be between 0 and 1. A higher score means more correctness. Choose from: 0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0
- Consider the question, the ground-truth answer, and the tester's response together to determine correctness.
- Objects in questions and answers may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the tester's response match correctly with the ground-truth answer.

# Output Format:
IMPORTANT: You must output ONLY a number between 0 and 1 (e.g., 0.5, 0.7, 1.0). Do not output any text, explanation, or reasoning. Only output the numeric score.

# Input:
- Question: {question}
- Ground Truth Answer: {ground_truth}
- Response: {response})tpl"},
    {"judge-video", "JUDGE(VIDEO)",
     R"tpl(<image>
Prompt:
# Task Description:
You are an expert evaluator tasked with scoring the accuracy of responses to open-ended questions. You will be provided with a question, a ground-truth answer, and a response from a tester. Your job is to assess the accuracy of the response and provide ONLY a score between 0 and 1.

# Guidelines:
- Score Range: Your score must be between 0 and 1. A higher score means more correctness. Choose from: 0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0
- Consider the question, the ground-truth answer, and the tester's response together to determine correctness.
- Objects in questions and answers may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the tester's response match correctly with the ground-truth answer.
- Time points may be indicated with <timestamp> (e.g., <1>), and time intervals with <start_timestamp>-<end_timestamp> (e.g., <3>-<5>). Verify that the tester's response includes accurate time expressions.

# Output Format:
IMPORTANT: You must output ONLY a number between 0 and 1 (e.g., 0.5, 0.7, 1.0). Do not output any text, explanation, or reasoning. Only output the numeric score.

# Input:
question: {instruction}
ground truth answer for the question: {ground_truth}
response from the tester: {rollout_text})tpl"},
    {"rewriter-image", "REWRITER (Image)",
     R"tpl(Prompt:
# Task Description:
You are an expert text editor. Your task is to rewrite an incorrect response to make it more accurate and aligned with the ground truth answer, while maintaining the original response's style and structure as much as possible.

# Context:
- Question: {question}
- Ground Truth Answer: {ground_truth}
- Original Response (to be rewritten): {rollout_text}

# Guidelines:
1. **Accuracy First**: The rewritten response must be factually correct and aligned with the ground truth answer.
2. **Object References**: Objects in the question and ground truth may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the rewritten response match correctly with the ground truth answer.
3. **Preserve Structure**: Try to maintain the original response's structure, style, and length as much as possible, while correcting errors.
4. **Semantic Alignment**: The rewritten response should convey the same meaning as the ground truth, but you can use different phrasings or synonyms as long as the meaning is preserved.
5. **Complete Response**: Ensure the rewritten response is complete and addresses the question fully.

# Output Format:
IMPORTANT: Output ONLY the rewritten response text. Do not include any explanations, reasoning, or meta-commentary. Just output the corrected response that should score 0.7 or higher when evaluated against the ground truth.

# Rewritten Response:)tpl"},
    {"rewriter-video", "REWRITER (Video)",
     R"tpl(Prompt:
# Task Description:
You are an expert text editor. Your task is to rewrite an incorrect response to make it more accurate and aligned with the ground truth answer, while maintaining the original response's style and structure as much as possible.

# Context:
- Question: {question}
- Ground Truth Answer: {ground_truth}
- Original Response (to be rewritten): {rollout_text}

# Guidelines:
1. **Accuracy First**: The rewritten response must be factually correct and aligned with the ground truth answer.
2. **Object References**: Objects in the question and ground truth may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the rewritten response match correctly with the ground truth answer.
3. **Time References**: Time points may be indicated with <timestamp> (e.g., <1>), and time intervals with <start_timestamp>-<end_timestamp> (e.g., <3>-<5>). Verify that the rewritten response includes accurate time expressions if needed.
4. **Preserve Structure**: Try to maintain the original response's structure, style, and length as much as possible, while correcting errors.
5. **Semantic Alignment**: The rewritten response should convey the same meaning as the ground truth, but you can use different phrasings or synonyms as long as the meaning is preserved.
6. **Complete Response**: Ensure the rewritten response is complete and addresses the question fully.

# Output Format:
IMPORTANT: Output ONLY the rewritten response text. Do not include any explanations, reasoning, or meta-commentary. Just output the corrected response that should score 0.6 or higher when evaluated against the ground truth.

# Rewritten Response:)tpl"},
    {"eval-gar-mc", "GAR (Multiple Choice)",
     R"tpl(<image>
Question: {question}
Options:
{options}
Prompt:
Based on the image, select the best answer to the following multiple-choice question. Each relevant object is highlighted with a bounding box and a numeric ID, and objects are referenced in the question and options using the format [ID] (e.g., "[0]", "[1]"). Respond with only the letter (A, B, C, or D) of the correct option.

The best answer is:)tpl"},
    {"eval-gar-oe-simple", "GAR (Simple Open-Ended)",
     R"tpl(<image>
Question: {question}
Prompt:
# Task Definition:
You are an expert in image analysis. In this task, you will receive an image, and your task is to answer the given question based on the image content.
# Guidelines and Rules:
- Object References: In the image, each object is surrounded by a box and has an unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[8]") or as [ID1] [ID2] ... for multiple objects, such as "[3] [4] [5]". Avoid commas, ranges, or phrases like "[1, 2, 3]" or "[1] to [3]". The IDs in the images and questions match directly.
# Relation:
When describing spatial relations among objects, please consider multiple perspectives, including left-or-right, front-or-back, and other potential relations.
# Output Instructions:
Please first briefly recognize the referred objects or regions, then answer.
# Examples:
[0] is a person with a red hat who sits next to [1], a bird.
[1] is a cow standing on grass, in front of [0], a person taking photos for [1].

Based on the input image, please answer the question:)tpl"},
    {"eval-gar-oe-detailed", "GAR (Detailed Open-Ended)",
     R"tpl(<image>
Question: {question}
Prompt:
# Task Definition:
You are an expert in image analysis. In this task, you will receive an image from, where each relevant object is highlighted with a bounding box and a numeric ID overlaid on the image.
# Guidelines and Rules:
- Object References: In the image, each object has a unique ID that is displayed next to its bounding box. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[0]") or as [ID1] [ID2] ... for multiple objects, such as "[0] [1] [2]". Avoid commas, ranges, or phrases like "[0, 1, 2]" or "[0] to [2]". The IDs in the images and questions match directly.

Based on the input image, please answer the question:)tpl"},
    {"eval-vip-oe", "VIP-Bench (Image Open-Ended)",
     R"tpl(<image>
Question: {question}
Prompt:
# Task Definition:
You are an expert in image analysis. In this task, you will receive an image, and your task is to answer the given question based on the image content.
# Guidelines and Rules:
- Object References: In the image, each object has a unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., '[red box]', '[yellow box]'). The IDs in the images and questions match directly.

Based on the input image, please answer the question:)tpl"},
    {"eval-blink-mc", "BLINK (Multiple Choice)",
     R"tpl(<image>
Question: {question}
Options:
{options}
Prompt:
Based on the image, select the best answer to the following multiple-choice question. In both the question and options, specific objects are represented using the format [ID] (e.g., '[REF]', '[A]'). Respond with only the letter (A, B, C, or D) of the correct option.

The best answer is:)tpl"},
    {"eval-instit-image-oe", "INST-IT (Image Open-Ended)",
     R"tpl(<image>
Question: {question}
Prompt:
# Task Definition:
You are an expert in image analysis. In this task, you will receive an image, and your task is to answer the given question based on the image content.
# Guidelines and Rules:
- Object References: In the image, each object has a unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[8]") or as [ID1] [ID2] ... for multiple objects, such as "[3] [4] [5]". Avoid commas, ranges, or phrases like "[1, 2, 3]" or "[1] to [3]". The IDs in the images and questions match directly.

Based on the input image, please answer the question:)tpl"},
    {"eval-instit-image-mc", "INST-IT (Image Multiple Choice)",
     R"tpl(<image>
Question: {question}
Options:
{options}
Prompt:
Based on the image, select the best answer to the following multiple-choice question. In both the question and options, specific objects are represented using the format [ID] (e.g., '[1]', '[2]'). Respond with only the letter (A, B, C, or D) of the correct option.

The best answer is:)tpl"},
    {"eval-instit-video-oe", "INST-IT (Video Open-Ended)",
     R"tpl(<image>
Question: {question}
Prompt:
# Task Definition:
You are an expert in video analysis. In this task, you will receive a series of frames as a video, and your task is to answer the given questions based on the video content.
# Input Format:
There are serveral images inputs as video frames. Each frame can be referenced by its timestamp (indicating when it appears in the video). For example, the first frame can be referred to as <1>.
# Guidelines and Rules:
- Object References: Each object has a unique ID. Use this ID in your response to specify objects, formatted as [ID] for a single object (e.g., "[8]") or as [ID1] [ID2] ... for multiple objects, such as "[3] [4] [5]". Avoid commas, ranges, or phrases like "[1, 2, 3]" or "[1] to [3]". The IDs in the images and questions match directly.
- Time References: Use timestamps to indicate moments or intervals in the video. For a specific moment, format as <timestamp> (e.g., "at <3>"). For an interval, use <start_timestamp>-<end_timestamp> (e.g., "during <5>-<7>"). Always enclose timestamps in <>.

Based on the input video, please answer the question:)tpl"},
    {"eval-instit-video-mc", "INST-IT (Video Multiple Choice)",
     R"tpl(<image>
Question: {question}
Options:
{options}
Prompt:
Based on the video, select the best answer to the following multiple-choice question. In both the question and options, specific objects are represented using the format [ID] (e.g., "[1]", "[2]"), and time references are shown using the format <timestamp> (e.g., "at <6>" or "during <7>-<8>"). Respond with only the letter (A, B, C, or D) of the correct option.

The best answer is:)tpl"},
    {"judge-gar-oe-simple", "GAR (Simple Open-Ended)",
     R"tpl(<image>
Prompt:
You are a language model expert. Your task is to evaluate the correctness of the model's output based on the provided ground truth and given masks.

- Ground truth: "{answer}"
- Model Output: "{model_output}"

Please determine if the model's output conveys the same meaning as the provided ground truth. If the output is semantically correct, return "True", otherwise return "False".

Attention:
1. The ground truth and model output do not need to match exactly, as long as they convey the same meaning. Synonyms and different phrasings are acceptable.

2. Do not output any reasoning. Do not perform correction. Please output only "True" or "False".)tpl"},
    {"judge-gar-oe-detailed", "GAR (Detailed Open-Ended)",
     R"tpl(<image>
Prompt:
You are a language model expert. Your task is to evaluate the following model output based on the provided images, and subject, object, and relationship.

- subject_name: {subject_name}
- object_name: {object_name}
- predicate_name: {predicate_name}
- model_output: {model_output}

Task:
1. Check if the model output describes the {subject_name}.
2. Check if the model output conveys the relationship between {subject_name} and {object_name} related to {predicate_name}.

Note:
- The first task only requires checking if {subject_name} is mentioned in the model output.
- The second task asks if the output conveys a relationship related to {predicate_name} between {subject_name} and {object_name}, even if different words or phrases are used.
- If both tasks are successfully completed, return "True" Otherwise, return "False"
- Do not output any reasoning. Do not perform correction. Please output only just one "True" or "False".)tpl"},
    {"judge-vip-oe", "VIP-Bench (Image Open-Ended)",
     R"tpl(<image>
Prompt:
Compare the ground truth and prediction from AI models, to give a correctness score for the prediction. <AND> in the ground truth means it is totally right only when all elements in the ground truth are present in the prediction, and <OR> means it is totally right when any one element in the ground truth is present in the prediction. The correctness score is 0.0 (totally wrong), 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, or 1.0 (totally right). Just complete the last space of the correctness score.

Question | Ground truth | Prediction | Correctness
--- | --- | --- | ---
What is x in the equation within the yellow rectangle? | -1 <AND> -5 | x = 3 | 0.0
What is x in the equation within the yellow rectangle? | -1 <AND> -5 | x = -1 | 0.5
What is x in the equation within the yellow rectangle? | -1 <AND> -5 | x = -5 | 0.5
What is x in the equation within the red rectangle? | -1 <AND> -5 | x = -5 or 5 | 0.5
What is x in the equation within the orange rectangle? | -1 <AND> -5 | x = -1 or x = -5 | 1.0
Can you explain this meme within the blue rectangle? | This meme is poking fun at the fact that the names of the countries Iceland and Greenland are misleading. Despite its name, Iceland is known for its beautiful green landscapes, while Greenland is mostly covered in ice and snow. The meme is saying that the person has trust issues because the names of these countries do not accurately represent their landscapes. | The meme talks about Iceland and Greenland. It's pointing out that despite their names, Iceland is not very icy and Greenland isn't very green. | 0.4
Can you explain this meme within the blue rectangle? | This meme is poking fun at the fact that the names of the countries Iceland and Greenland are misleading. Despite its name, Iceland is known for its beautiful green landscapes, while Greenland is mostly covered in ice and snow. The meme is saying that the person has trust issues because the names of these countries do not accurately represent their landscapes. | The meme is using humor to point out the misleading nature of Iceland's and Greenland's names. Iceland, despite its name, has lush green landscapes while Greenland is mostly covered in ice and snow. The text 'This is why I have trust issues' is a playful way to suggest that these contradictions can lead to distrust or confusion. The humor in this meme is derived from the unexpected contrast between the names of the countries and their actual physical characteristics. | 1.0

IMPORTANT: Output ONLY a single number between 0.0 and 1.0. No other text.)tpl"},
    {"judge-instit-image-oe", "INST-IT (Image Open-Ended)",
     R"tpl(<image>
Prompt:
# Task Description:
You are an expert evaluator tasked with scoring the accuracy of responses to open-ended questions. You will be provided with a set of questions, each with a corresponding ground-truth answer, as well as responses from a tester. Your job is to assess the accuracy of each response and provide a score between 0 and 1.
# Guidelines:
- Score Range: Your score for each test item must be between 0 and 1. A higher score means more correctness. Choose from the following: 0 (completely incorrect), 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0 (completely correct)
- For each test item, consider the question, the ground-truth answer, and the tester's response together to determine correctness.
- Objects in questions and answers may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the tester's response match correctly with the ground-truth answer.
# Input Format:
The input is a set of test items to be scored, where each item includes:
- `question`;
- `ground truth answer for the question`;
- `response from the tester`.
Now, let's begin the evaluation, here are the input test items:)tpl"},
    {"judge-instit-video-oe", "INST-IT (Video Open-Ended)",
     R"tpl(<image>
Prompt:
# Task Description:
You are an expert evaluator tasked with scoring the accuracy of responses to open-ended questions. You will be provided with a set of questions, each with a corresponding ground-truth answer, as well as responses from a tester. Your job is to assess the accuracy of each response and provide a score between 0 and 1.
# Guidelines:
- Score Range: Your score for each test item must be between 0 and 1. A higher score means more correctness. Choose from the following: 0 (completely incorrect), 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0 (completely correct)
- For each test item, consider the question, the ground-truth answer, and the tester's response together to determine correctness.
- Objects in questions and answers may be referenced using the format [ID] (e.g., [1], [2]). Ensure that any objects referenced in the tester's response match correctly with the ground-truth answer.
- Time points may be indicated with <timestamp> (e.g., <1>), and time intervals with <start_timestamp>-<end_timestamp> (e.g., <3>-<5>). Verify that the tester's response includes accurate time expressions.
# Input Format:
The input is a set of test items to be scored, where each item includes:
- `question`;
- `ground truth answer for the question`;
- `response from the tester`.
Now, let's begin the evaluation, here are the input test items:)tpl"},
};

}  // namespace

const std::vector<TemplateEntry>& template_table() { return kTemplates; }

}  // namespace csteer
