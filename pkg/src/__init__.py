# Stacked dense U-Net landmark toolkit
