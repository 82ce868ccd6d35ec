"""diffpath: per-pixel diffusion pathways for small conv classifiers."""

from . import errors
from .analysis import (AnovaResult, PartAssignment, PortionHotVector,
                       anova_oneway, category_centers, l2_distance, parts_topk,
                       portion_hot, ranking_overlap, saliency_map, scalarize)
from .arch import ModelSpec, LayerSpec, reference_vgg16, tiny_conv, toy_net
from .attacks import (AdversarialGroup, AttackConfig, build_adversarial_groups,
                      fgsm, grad_cam, input_gradient)
from .datasets import (LabeledDataset, Preprocessing, gen_m2nist, load_cifar10_bin,
                       load_idx, load_idx_multilabel, load_manifest, preprocess)
from .dpwn import load_model, read_container, write_container, write_model
from .pathways import (LayerPathwayAggregate, PathwayOptions, PathwayResult,
                       PixelField, apply_channel_mask, apply_pool_mask,
                       apply_relu_mask, build_diffusion_kernels, conv_diffuse,
                       extent_schedule, extract_pathways, load_result,
                       pixel_fields, save_result)
from .runtime import ForwardTrace, channel_importance, forward_trace
from .transforms import TransformGroup, build_transform_groups, occlude, rotate

__version__ = "0.1.0"
