"""Deep linear convolutional transform learning for accelerated MRI."""
