from .scenes import SceneKnobs, SyntheticScene, generate_scene, generate_scenes, scene_to_frame, scenes_to_dataset
from .model import Architecture, ToyModel, forward, load_checkpoint, predict_boxes, save_checkpoint
from .trainer import LossBreakdown, TrainConfig, check_head_isolation, evaluate_loss, train
from .gradcheck import GradCheckResult, grad_check
