from cdgnet.nn.deform import DeformConv2d, bilinear_sample, deform_conv2d
from cdgnet.nn.module import Conv2d, ConvTranspose2d, Module, Parameter

__all__ = (
    "Conv2d",
    "ConvTranspose2d",
    "DeformConv2d",
    "Module",
    "Parameter",
    "bilinear_sample",
    "deform_conv2d",
)
