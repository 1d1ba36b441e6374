from cdgnet.models.network import CDGNet, DeblurOutput

__all__ = ("CDGNet", "DeblurOutput")
