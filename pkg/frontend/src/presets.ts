/** Instruction presets offered in the console, one list per task family. */

export const DETECTION_TEMPLATES = [
  "Give me the location of the {target}",
  "Give me the position of the {target}",
  "Where is the {target}?",
  "Where is located the {target} in this image?",
  "Which is the position of the {target}?",
  "From this image, tell me the location of the {target}",
  "Could you tell me the location of the {target}?",
  "Where can I locate the {target}?",
] as const;

export const CLASSIFICATION_INSTRUCTIONS = [
  "Does the pancreas in the image present a tumor?",
  "Is there a tumor in the pancreas shown in the image?",
  "Can you see a tumor in the pancreas in this picture?",
  "Does the image show a tumor in the pancreas?",
  "Is a pancreatic tumor visible in the image?",
  "Is the pancreas in this image showing signs of a tumor?",
  "Is the pancreas in the image affected by a tumor?",
  "Does the pancreas in the picture have a tumor?",
] as const;

export function detectionInstructions(target: string): string[] {
  return DETECTION_TEMPLATES.map((t) => t.replace("{target}", target));
}

export interface PresetGroup {
  label: string;
  task: "refer" | "vqa";
  instructions: string[];
}

export function presetGroups(): PresetGroup[] {
  return [
    { label: "Pancreas detection", task: "refer", instructions: detectionInstructions("pancreas") },
    { label: "Tumor classification", task: "vqa", instructions: [...CLASSIFICATION_INSTRUCTIONS] },
    { label: "Tumor detection", task: "refer", instructions: detectionInstructions("pancreas tumor") },
  ];
}
